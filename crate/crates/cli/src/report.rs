use std::fmt::Write;

use serde::Serialize;
use swapsim::analytic::{ClassicalStrategy, ModelRow, NoiseBudget};
use swapsim::protocol::{SweepRow, SwapMonteCarlo, SwapResult, TeleportMonteCarlo, TeleportResult};

/// One command's result in all three output forms.
pub struct Report {
    pub result: serde_json::Value,
    pub csv: String,
    pub text: String,
}

fn csv_rows<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("records are flat");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
}

fn json<T: Serialize>(x: &T) -> serde_json::Value {
    serde_json::to_value(x).expect("plain data")
}

#[derive(Serialize)]
struct BudgetRow {
    gamma: f64,
    eps: f64,
    eta: f64,
    p0: f64,
    p1: f64,
    p2: f64,
    p3: f64,
    total: f64,
    success_rate: f64,
    heralding_eff_model: f64,
}

pub fn noise_budget(gamma: f64, eps: f64, eta: f64, nb: &NoiseBudget) -> Report {
    let row = BudgetRow {
        gamma,
        eps,
        eta,
        p0: nb.p0,
        p1: nb.p1,
        p2: nb.p2,
        p3: nb.p3,
        total: nb.total(),
        success_rate: nb.success_rate,
        heralding_eff_model: nb.heralding_eff_model,
    };
    let mut text = format!("γ={gamma} ε={eps} η={eta}\n");
    for (name, v) in [("p0", nb.p0), ("p1", nb.p1), ("p2", nb.p2), ("p3", nb.p3), ("total", nb.total())] {
        let _ = writeln!(text, "  {name:<6}{v:.6e}");
    }
    let _ = writeln!(text, "  success rate       {:.6}", nb.success_rate);
    let _ = writeln!(text, "  heralding (model)  {:.6}", nb.heralding_eff_model);
    Report { result: json(&row), csv: csv_rows(&[row]), text }
}

pub fn model_rows(rows: &[ModelRow]) -> Report {
    let mut text = String::from("     eta      km   gamma  heralding  success  direct\n");
    for r in rows {
        let _ = writeln!(
            text,
            "{:>8.4} {:>7.2} {:>7.4} {:>10.6} {:>8.6} {:>7.4}",
            r.eta, r.km, r.gamma, r.heralding_eff_model, r.success_rate, r.direct_transmission
        );
    }
    Report { result: json(&rows), csv: csv_rows(rows), text }
}

pub fn classical(c: &ClassicalStrategy) -> Report {
    let text = format!(
        "F0={} over η={}: {:.4} clones, rate {:.6}\n",
        c.f0, c.eta, c.n_copies, c.rate
    );
    Report { result: json(c), csv: csv_rows(&[c]), text }
}

#[derive(Serialize)]
struct Fig2Row {
    eta: f64,
    km: f64,
    a2: f64,
    fidelity: f64,
    a2_strict: f64,
    a2_estimator: f64,
    gamma: f64,
    heralding_eff_model: f64,
    success_rate: f64,
    direct_transmission: f64,
}

/// Heralding sweep; `a2` is the probability that both outputs are present.
pub fn fig2(rows: &[SweepRow]) -> Report {
    let out: Vec<Fig2Row> = rows
        .iter()
        .map(|r| Fig2Row {
            eta: r.eta,
            km: r.km,
            a2: r.heralding_eff_exact,
            fidelity: r.fidelity,
            a2_strict: r.a2_sector,
            a2_estimator: r.a2_estimator,
            gamma: r.gamma,
            heralding_eff_model: r.heralding_eff_model,
            success_rate: r.success_rate,
            direct_transmission: r.direct_transmission,
        })
        .collect();
    let mut text = String::from("   eta   km      a2  fidelity  a2 strict  model\n");
    for r in &out {
        let _ = writeln!(
            text,
            "{:>6.2} {:>4.0} {:>7.4} {:>9.6} {:>10.4} {:>6.4}",
            r.eta, r.km, r.a2, r.fidelity, r.a2_strict, r.heralding_eff_model
        );
    }
    Report { result: json(&out), csv: csv_rows(&out), text }
}

#[derive(Serialize)]
struct OutcomeRow<'a> {
    herald: &'a str,
    correction: &'static str,
    probability: f64,
    a2: f64,
    presence: f64,
    fidelity: Option<f64>,
}

pub fn swap(r: &SwapResult) -> Report {
    let rows: Vec<OutcomeRow> = r
        .outcomes
        .iter()
        .map(|o| OutcomeRow {
            herald: &o.herald,
            correction: o.correction.label(),
            probability: o.probability,
            a2: o.a2,
            presence: o.presence,
            fidelity: o.fidelity,
        })
        .collect();
    let mut text = String::new();
    let _ = writeln!(text, "fidelity             {:.6}", r.fidelity);
    let _ = writeln!(text, "heralding (present)  {:.6}", r.heralding_efficiency);
    let _ = writeln!(text, "a2 strict            {:.6}", r.sectors.a2);
    let _ = writeln!(text, "a2 estimator         {:.6}", r.a2_estimator_exact);
    let _ = writeln!(text, "p(c4)                {:.6e}", r.p_c4);
    let _ = writeln!(text, "p(c6)                {:.6e}", r.p_c6);
    if let Some(nb) = &r.noise_budget {
        let _ = writeln!(
            text,
            "model p0..p3         {:.3e} {:.3e} {:.3e} {:.3e}",
            nb.p0, nb.p1, nb.p2, nb.p3
        );
    }
    let _ = writeln!(text, "outcomes:");
    for o in &rows {
        let f = o.fidelity.map_or("-".to_string(), |f| format!("{f:.6}"));
        let _ = writeln!(
            text,
            "  {:<28} {:<3} p={:.4e} presence={:.4} F={f}",
            o.herald, o.correction, o.probability, o.presence
        );
    }
    Report { result: json(r), csv: csv_rows(&rows), text }
}

#[derive(Serialize)]
struct SwapMcRow {
    shots: u64,
    seed: u64,
    c4: u64,
    c5: u64,
    c6: u64,
    c8: u64,
    a2_estimate: f64,
    sigma: f64,
    a2_exact: f64,
}

pub fn swap_mc(m: &SwapMonteCarlo) -> Report {
    let c = &m.counts;
    let row = SwapMcRow {
        shots: c.shots,
        seed: c.seed,
        c4: c.c4,
        c5: c.c5,
        c6: c.c6,
        c8: c.c8,
        a2_estimate: m.a2_estimate,
        sigma: m.sigma,
        a2_exact: m.exact.a2_estimator_exact,
    };
    let text = format!(
        "{} shots, seed {}: c4={} c6={}\nÃ2 = {:.6} ± {:.6} (exact {:.6})\n",
        c.shots, c.seed, c.c4, c.c6, m.a2_estimate, m.sigma, row.a2_exact
    );
    Report { result: json(m), csv: csv_rows(&[row]), text }
}

#[derive(Serialize)]
struct TeleportCsvRow<'a> {
    input: &'a str,
    fidelity: f64,
    efficiency: f64,
    p_c5: f64,
    p_c8: f64,
}

pub fn teleport(r: &TeleportResult) -> Report {
    let mut rows: Vec<TeleportCsvRow> = r
        .rows
        .iter()
        .map(|x| TeleportCsvRow {
            input: x.input,
            fidelity: x.fidelity,
            efficiency: x.efficiency,
            p_c5: x.p_c5,
            p_c8: x.p_c8,
        })
        .collect();
    let n = rows.len() as f64;
    let mean = |f: fn(&TeleportCsvRow) -> f64, rows: &[TeleportCsvRow]| rows.iter().map(f).sum::<f64>() / n;
    let avg = TeleportCsvRow {
        input: "average",
        fidelity: r.average_fidelity,
        efficiency: r.average_efficiency,
        p_c5: mean(|x| x.p_c5, &rows),
        p_c8: mean(|x| x.p_c8, &rows),
    };
    let mut text = String::from("input  fidelity  efficiency\n");
    for x in &rows {
        let _ = writeln!(text, "{:<6} {:>8.4} {:>11.5}", x.input, x.fidelity, x.efficiency);
    }
    let _ = writeln!(text, "{:<6} {:>8.4} {:>11.5}", "avg", r.average_fidelity, r.average_efficiency);
    let _ = writeln!(text, "swap heralding {:.4}, model efficiency {:.5}", r.swap_heralding, r.model_efficiency);
    match (&r.classical, r.advantage_ratio) {
        (Some(c), Some(a)) => {
            let _ = writeln!(
                text,
                "classical bound at F={:.4} over {}: {:.5} ({:.2} clones), advantage {:.3}",
                c.f0, r.direct_channel, c.rate, c.n_copies, a
            );
        }
        _ => {
            let _ = writeln!(text, "average fidelity at or below 2/3: no classical bound");
        }
    }
    let _ = writeln!(
        text,
        "F > 2/3: {}; beats direct {}: {}; beats classical: {}",
        r.exceeds_two_thirds, r.direct_channel, r.beats_direct, r.beats_classical
    );
    rows.push(avg);
    Report { result: json(r), csv: csv_rows(&rows), text }
}

#[derive(Serialize)]
struct TeleportMcRow {
    input: &'static str,
    shots: u64,
    seed: u64,
    c5: u64,
    c8: u64,
    efficiency_estimate: f64,
    sigma: f64,
    exact_efficiency: f64,
}

pub fn teleport_mc(runs: &[TeleportMonteCarlo]) -> Report {
    let rows: Vec<TeleportMcRow> = runs
        .iter()
        .map(|m| TeleportMcRow {
            input: m.input,
            shots: m.counts.shots,
            seed: m.counts.seed,
            c5: m.counts.c5,
            c8: m.counts.c8,
            efficiency_estimate: m.efficiency_estimate,
            sigma: m.sigma,
            exact_efficiency: m.exact_efficiency,
        })
        .collect();
    let mut text = String::new();
    for r in &rows {
        let _ = writeln!(
            text,
            "{:<3} c5={} c8={}  R̃ = {:.5} ± {:.5} (exact {:.5})",
            r.input, r.c5, r.c8, r.efficiency_estimate, r.sigma, r.exact_efficiency
        );
    }
    Report { result: json(&runs), csv: csv_rows(&rows), text }
}
