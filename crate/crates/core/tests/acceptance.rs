//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances are the pinned ones; nothing here is tuned.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use swapsim::analytic::{
    advantage_ratio, classical_rate, cloning_fidelity, equivalent_km_exact, log_spaced,
    model_row, noise_budget, DEFAULT_GAMMA_EPS_ETA,
};
use swapsim::protocol::{
    run_swap_exact, run_swap_montecarlo, run_teleport, run_teleport_montecarlo, sweep_heralding,
    Bsm2Design, InputState, SwapConfig, TeleportConfig, SWEEP_ETAS,
};

type Outcome = Result<String, String>;

fn close(x: f64, want: f64, tol: f64) -> bool {
    (x - want).abs() <= tol
}

fn rel(x: f64, want: f64) -> f64 {
    ((x - want) / want).abs()
}

fn analytic_exactness() -> Outcome {
    let t = Instant::now();
    let nb = noise_budget(1.0, 0.02, 1.0).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let want = [(nb.p0, 2e-6), (nb.p1, 1e-8), (nb.p2, 1e-6), (nb.p3, 1.25e-7)];
    let worst = want.iter().map(|&(x, w)| rel(x, w)).fold(0.0, f64::max);
    let msg = format!(
        "p0={:e} p1={:e} p2={:e} p3={:e}, worst rel {worst:.1e}, {elapsed:?}",
        nb.p0, nb.p1, nb.p2, nb.p3
    );
    if worst <= 1e-12 && elapsed < Duration::from_millis(1) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn success_rate_flat() -> Outcome {
    let mut etas = log_spaced(0.03, 1.0, 50);
    etas.extend(SWEEP_ETAS);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &eta in &etas {
        let r = model_row(0.02, eta, DEFAULT_GAMMA_EPS_ETA).map_err(|e| e.to_string())?;
        lo = lo.min(r.success_rate);
        hi = hi.max(r.success_rate);
    }
    let msg = format!("{} points, success rate in [{lo:.5}, {hi:.5}]", etas.len());
    if close(lo, 0.857, 0.001) && close(hi, 0.857, 0.001) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn classical_chain() -> Outcome {
    let rate = classical_rate(0.826, 0.01).map_err(|e| e.to_string())?.rate;
    let ratio = advantage_ratio(0.062, 0.021).map_err(|e| e.to_string())?;
    let clone = cloning_fidelity(2.0).map_err(|e| e.to_string())?;
    let msg = format!("rate {rate:.5}, ratio {ratio:.4}, F(2) {clone}");
    if close(rate, 0.0209, 1e-4) && close(ratio, 2.95, 0.01) && clone == 5.0 / 6.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn oracle_equivalence() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for eps in [0.005, 0.02] {
        for eta in [1.0, 0.18] {
            let cfg = SwapConfig {
                eps,
                gamma: 1.0,
                eta,
                n_max: 2,
                eta1: 1.0,
                eta6: 1.0,
                bsm_eff: 1.0,
                visibility: 1.0,
                bsm2: Bsm2Design::Circular,
            };
            let t = Instant::now();
            let r = run_swap_exact(&cfg).map_err(|e| e.to_string())?;
            let elapsed = t.elapsed();
            let nb = noise_budget(1.0, eps, eta).map_err(|e| e.to_string())?;
            let single = rel(r.p_c4 * r.sectors.a2, nb.p0);
            let total = rel(r.p_c4, nb.total());
            ok &= single <= 5.0 * eps && total <= 0.25 && elapsed < Duration::from_secs(60);
            parts.push(format!(
                "ε={eps} η={eta}: p0 rel {single:.2e}, Σp rel {total:.3} ({:.1}s)",
                elapsed.as_secs_f64()
            ));
        }
    }
    let msg = parts.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ideal_invariants() -> Outcome {
    let mut worst_swap: f64 = 0.0;
    for eta in [1.0, 0.5, 0.18, 0.03] {
        let r = run_swap_exact(&SwapConfig::ideal(eta)).map_err(|e| e.to_string())?;
        if r.outcomes.is_empty() {
            return Err(format!("η={eta}: no accepted outcome"));
        }
        for o in &r.outcomes {
            let f = o.fidelity.ok_or(format!("η={eta} {}: no output pair", o.herald))?;
            worst_swap = worst_swap.max((f - 1.0).abs());
        }
    }
    let t = run_teleport(&TeleportConfig::ideal(), &InputState::ALL).map_err(|e| e.to_string())?;
    let worst_f = t.rows.iter().map(|r| (r.fidelity - 1.0).abs()).fold(0.0, f64::max);
    let worst_e = t.rows.iter().map(|r| (r.efficiency - 0.5).abs()).fold(0.0, f64::max);
    let msg = format!(
        "swap |F−1| ≤ {worst_swap:.1e}; teleport |F−1| ≤ {worst_f:.1e}, |E−1/2| ≤ {worst_e:.1e} over {} inputs",
        t.rows.len()
    );
    if worst_swap <= 1e-10 && worst_f <= 1e-10 && worst_e <= 1e-10 && t.rows.len() == 6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn heralding_bracket() -> Outcome {
    let rows = sweep_heralding(&SwapConfig::default(), &SWEEP_ETAS, DEFAULT_GAMMA_EPS_ETA)
        .map_err(|e| e.to_string())?;
    let mut pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| (equivalent_km_exact(r.eta), r.heralding_eff_exact, r.eta))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let at_003 = rows
        .iter()
        .find(|r| r.eta == 0.03)
        .map(|r| r.heralding_eff_exact)
        .ok_or("η=0.03 missing")?;
    let slopes: Vec<f64> = pts.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let concave = slopes.windows(2).all(|s| s[1] <= s[0]);
    let above = pts.iter().filter(|p| p.2 < 1.0).all(|p| p.1 > p.2);
    let curve: Vec<String> = pts.iter().map(|p| format!("{:.0}km {:.4}", p.0, p.1)).collect();
    let msg = format!(
        "A2(η=0.03)={at_003:.4}; {}; concave {concave}; above η {above}",
        curve.join(", ")
    );
    if (0.70..=0.92).contains(&at_003) && concave && above {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn estimator_consistency() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    // swap at the lab arm efficiencies, unit channel so that four-folds occur
    let cfg = SwapConfig { eta: 1.0, gamma: 1.0, ..SwapConfig::default() };
    let mut swap_runs = Vec::new();
    for eps in [0.02, 0.2] {
        let mc = run_swap_montecarlo(&SwapConfig { eps, ..cfg }, 10_000_000, 11)
            .map_err(|e| e.to_string())?;
        let exact = mc.exact.a2_estimator_exact;
        let z = (mc.a2_estimate - exact).abs() / mc.sigma;
        ok &= z <= 3.0;
        parts.push(format!(
            "swap ε={eps}: Ã2 {:.4}±{:.4} vs {exact:.4} (c4={}, {z:.2}σ)",
            mc.a2_estimate, mc.sigma, mc.counts.c4
        ));
        swap_runs.push(mc);
    }

    let mut tcfg = TeleportConfig::lab();
    tcfg.swap.eps = 0.2;
    tcfg.swap.gamma = 1.0;
    let tmc = run_teleport_montecarlo(&tcfg, 100_000_000, 7).map_err(|e| e.to_string())?;
    let z = (tmc.efficiency_estimate - tmc.exact_efficiency).abs() / tmc.sigma;
    ok &= z <= 3.0;
    parts.push(format!(
        "teleport ε=0.2: R̃ {:.4}±{:.4} vs {:.4} (c5={}, {z:.2}σ)",
        tmc.efficiency_estimate, tmc.sigma, tmc.exact_efficiency, tmc.counts.c5
    ));

    let again = run_swap_montecarlo(&SwapConfig { eps: 0.02, ..cfg }, 10_000_000, 11)
        .map_err(|e| e.to_string())?;
    let same_swap = json(&again) == json(&swap_runs[0]);
    let tagain = run_teleport_montecarlo(&tcfg, 100_000_000, 7).map_err(|e| e.to_string())?;
    let same_tel = json(&tagain) == json(&tmc);
    ok &= same_swap && same_tel;
    parts.push(format!("reruns byte-identical: swap {same_swap}, teleport {same_tel}"));
    let msg = parts.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn json<T: serde::Serialize>(x: &T) -> String {
    serde_json::to_string(x).unwrap()
}

fn basis_design() -> Outcome {
    let eta = 0.18;
    let gamma = swapsim::analytic::sweep_constraint(0.02, eta, DEFAULT_GAMMA_EPS_ETA)
        .map_err(|e| e.to_string())?;
    let base = SwapConfig { eta, gamma, ..SwapConfig::default() };
    let circular = run_swap_exact(&SwapConfig { bsm2: Bsm2Design::Circular, ..base })
        .map_err(|e| e.to_string())?;
    let plain = run_swap_exact(&SwapConfig { bsm2: Bsm2Design::Plain, ..base })
        .map_err(|e| e.to_string())?;
    let msg = format!(
        "mixed-basis F {:.6} vs same-basis F {:.6}",
        circular.fidelity, plain.fidelity
    );
    if plain.fidelity < circular.fidelity {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn property_suites() -> Outcome {
    use common::*;
    let limit = Duration::from_secs(30);
    let suites: Vec<(&str, Box<dyn Fn() -> Result<Duration, String>>)> = vec![
        ("povm", Box::new(|| run_suite(128, povm_case(), check_povm))),
        ("unitarity", Box::new(|| run_suite(128, element(), check_unitary))),
        (
            "norm+inverse",
            Box::new(|| {
                run_suite(128, (state(), prop::collection::vec(element(), 1..4)), check_norm_and_inverse)
            }),
        ),
        ("loss trace", Box::new(|| run_suite(128, loss_case(), check_loss_trace))),
        ("loss compose", Box::new(|| run_suite(128, loss_case(), check_loss_composes))),
        ("hom", Box::new(|| run_suite(128, 0.0..=1.0f64, check_hom))),
        ("round trip", Box::new(|| run_suite(50, spec(), check_round_trip))),
        (
            "fuzz",
            Box::new(|| {
                let a = run_suite(2000, random_text(), check_error_position)?;
                let b = run_suite(2000, token_soup(), check_error_position)?;
                Ok(a + b)
            }),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, suite) in suites {
        match suite() {
            Ok(d) => {
                ok &= d < limit;
                parts.push(format!("{name} {:.2}s", d.as_secs_f64()));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name} failed: {e}"));
            }
        }
    }
    let msg = parts.join(", ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn excluded_and_visibility() -> Outcome {
    let mut fs = Vec::new();
    for v in [1.0, 0.95, 0.9] {
        let r = run_swap_exact(&SwapConfig { visibility: v, ..SwapConfig::default() })
            .map_err(|e| e.to_string())?;
        fs.push((v, r.fidelity));
    }
    let monotone = fs.windows(2).all(|w| w[1].1 < w[0].1);
    let msg = format!(
        "measured fidelities excluded (lab noise not modelled); F(V) at η=0.03: {}",
        fs.iter().map(|(v, f)| format!("V={v} {f:.4}")).collect::<Vec<_>>().join(", ")
    );
    if monotone {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("analytic exactness", analytic_exactness),
        ("flat success rate", success_rate_flat),
        ("classical bound chain", classical_chain),
        ("oracle equivalence", oracle_equivalence),
        ("ideal-protocol invariants", ideal_invariants),
        ("heralding bracket", heralding_bracket),
        ("estimator consistency", estimator_consistency),
        ("basis design", basis_design),
        ("property suites", property_suites),
        ("excluded fidelities, V monotonicity", excluded_and_visibility),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (tag, msg) = match run() {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed += 1;
                ("FAIL", m)
            }
        };
        println!("{tag} {:>2} {name} [{:.1}s]: {msg}", k + 1, t.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
