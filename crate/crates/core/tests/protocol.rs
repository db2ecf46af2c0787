use swapsim::circuitdsl::{parse, CircuitSpec};
use swapsim::protocol::{
    run_swap_exact, run_swap_montecarlo, run_swap_spec, run_teleport, run_teleport_spec,
    InputState, SwapConfig, TeleportConfig,
};

fn example(name: &str) -> CircuitSpec {
    let path = format!("{}/examples/{name}", env!("CARGO_MANIFEST_DIR"));
    parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn json<T: serde::Serialize>(x: &T) -> String {
    serde_json::to_string(x).unwrap()
}

#[test]
fn swap_monte_carlo_is_seeded() {
    let cfg = SwapConfig { eps: 0.2, eta: 1.0, ..SwapConfig::default() };
    let a = run_swap_montecarlo(&cfg, 200_000, 3).unwrap();
    let b = run_swap_montecarlo(&cfg, 200_000, 3).unwrap();
    let c = run_swap_montecarlo(&cfg, 200_000, 4).unwrap();
    assert_eq!(json(&a), json(&b));
    assert_ne!(json(&a.counts), json(&c.counts));
}

#[test]
fn perfect_outputs_make_the_estimator_a_frequency() {
    let cfg = SwapConfig { eps: 0.2, eta: 1.0, eta1: 1.0, eta6: 1.0, ..SwapConfig::default() };
    let mc = run_swap_montecarlo(&cfg, 200_000, 5).unwrap();
    assert!(mc.counts.c4 > 0);
    assert_eq!(mc.a2_estimate, mc.counts.c6 as f64 / mc.counts.c4 as f64);
}

#[test]
fn two_photon_sector_shrinks_with_pair_rate() {
    // presence rises with ε (outer double pairs fill both outputs), the
    // strict one-photon-per-output weight does not
    for gamma in [1.0, 0.1667] {
        let mut last = f64::INFINITY;
        for eps in [0.005, 0.01, 0.02, 0.05] {
            let cfg = SwapConfig { eps, gamma, eta: 0.18, ..SwapConfig::default() };
            let a2 = run_swap_exact(&cfg).unwrap().sectors.a2;
            assert!(a2 <= last, "γ={gamma} ε={eps}: {a2} after {last}");
            last = a2;
        }
    }
}

#[test]
fn fidelity_drops_with_distinguishability() {
    let mut last = f64::INFINITY;
    for v in [1.0, 0.9, 0.7, 0.5] {
        let cfg = SwapConfig { n_max: 1, visibility: v, eta: 0.18, ..SwapConfig::default() };
        let f = run_swap_exact(&cfg).unwrap().fidelity;
        assert!(f < last + 1e-12, "V={v}: {f} after {last}");
        last = f;
    }
}

#[test]
fn swap_file_reproduces_the_builder() {
    let from_file = run_swap_spec(&example("swap.qc")).unwrap();
    let built = run_swap_exact(&SwapConfig::default()).unwrap();
    assert!((from_file.fidelity - built.fidelity).abs() < 1e-12);
    assert!((from_file.p_c4 - built.p_c4).abs() < 1e-12 * built.p_c4);
    assert!((from_file.heralding_efficiency - built.heralding_efficiency).abs() < 1e-12);
    let heralds = |r: &swapsim::protocol::SwapResult| {
        r.outcomes.iter().map(|o| (o.herald.clone(), o.correction)).collect::<Vec<_>>()
    };
    assert_eq!(heralds(&from_file), heralds(&built));
}

#[test]
fn teleport_file_reproduces_the_builder() {
    let cfg = TeleportConfig::lab();
    let from_file =
        run_teleport_spec(&example("teleport.qc"), &[InputState::H], cfg.direct_channel).unwrap();
    let built = run_teleport(&cfg, &[InputState::H]).unwrap();
    let (a, b) = (&from_file.rows[0], &built.rows[0]);
    assert!((a.fidelity - b.fidelity).abs() < 1e-12);
    assert!((a.efficiency - b.efficiency).abs() < 1e-12);
}

#[test]
fn lab_teleport_beats_classical_and_direct() {
    let r = run_teleport(&TeleportConfig::lab(), &InputState::ALL).unwrap();
    assert!((0.75..=0.90).contains(&r.average_fidelity), "{}", r.average_fidelity);
    assert!(r.exceeds_two_thirds && r.beats_direct && r.beats_classical, "{r:?}");
}
