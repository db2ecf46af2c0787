//! Strategies and property checks shared by the property suites and the
//! acceptance run.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use swapsim::circuitdsl::{
    parse, serialize, validate, CircuitSpec, DetectorDecl, HeraldDecl, SourceDecl, Statement,
};
use swapsim::detection::{Detector, DetectorConfig, MeasuredEnsemble};
use swapsim::fock::{ModeLayout, Occupation, OpticalMode, Pol, PureState, StateEnsemble};
use swapsim::optics::{
    apply_loss, apply_unitary, cpbs, hwp, pbs, phase, qwp, spectral_overlap, LossChannel,
    ModeUnitary,
};
use swapsim::sources::PairState;

pub type Check = Result<(), TestCaseError>;

/// Runs `cases` deterministic cases of `test`; returns the elapsed time or
/// the first failure.
pub fn run_suite<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Check,
) -> Result<Duration, String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let t = Instant::now();
    runner.run(&strategy, test).map_err(|e| e.to_string())?;
    Ok(t.elapsed())
}

fn layout(n: u32, bins: usize) -> Arc<ModeLayout> {
    Arc::new(ModeLayout::numbered(n, bins).unwrap())
}

fn occupation() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, 6).prop_filter("at most three photons", |v| {
        v.iter().map(|&n| u32::from(n)).sum::<u32>() <= 3
    })
}

/// Normalized superposition of up to three photons on modes 1..=3.
pub fn state() -> impl Strategy<Value = PureState> {
    prop::collection::vec((occupation(), -1.0..1.0f64, -1.0..1.0f64), 1..5).prop_map(|terms| {
        let raw = PureState::from_terms(
            layout(3, 1),
            terms.iter().map(|(occ, re, im)| {
                (Occupation::from_counts(occ.clone()), Complex64::new(*re, *im))
            }),
        )
        .unwrap();
        raw.normalized().unwrap_or_else(|| PureState::vacuum(layout(3, 1)))
    })
}

/// One optical element on modes 1..=3 (a cpbs expands to several).
pub fn element() -> impl Strategy<Value = Vec<ModeUnitary>> {
    let angle = -3.2..3.2f64;
    let pair = (1u32..=3, 1u32..=3).prop_filter("distinct", |(a, b)| a != b);
    prop_oneof![
        (1u32..=3, angle.clone()).prop_map(|(m, t)| vec![hwp(m, t).unwrap()]),
        (1u32..=3, angle.clone()).prop_map(|(m, t)| vec![qwp(m, t).unwrap()]),
        (1u32..=3, any::<bool>(), angle).prop_map(|(m, v, t)| {
            vec![phase(m, if v { Pol::V } else { Pol::H }, t).unwrap()]
        }),
        pair.clone().prop_map(|(a, b)| vec![pbs(a, b).unwrap()]),
        pair.prop_map(|(a, b)| cpbs(a, b).unwrap()),
    ]
}

pub fn rho(e: &StateEnsemble) -> BTreeMap<(Occupation, Occupation), Complex64> {
    let mut out = BTreeMap::new();
    for b in e.branches() {
        for (oi, ai) in b.state.iter() {
            for (oj, aj) in b.state.iter() {
                *out.entry((oi.clone(), oj.clone())).or_default() += ai * aj.conj() * b.weight;
            }
        }
    }
    out
}

pub fn check_unitary(us: Vec<ModeUnitary>) -> Check {
    for u in us {
        let m = u.matrix();
        let err = (m.adjoint() * m - DMatrix::<Complex64>::identity(m.nrows(), m.ncols())).norm();
        prop_assert!(err < 1e-10, "deviation {err}");
    }
    Ok(())
}

pub fn check_norm_and_inverse((s, us): (PureState, Vec<Vec<ModeUnitary>>)) -> Check {
    let flat: Vec<ModeUnitary> = us.into_iter().flatten().collect();
    let mut out = s.clone();
    for u in &flat {
        out = apply_unitary(&out, u).unwrap();
    }
    prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    for u in flat.iter().rev() {
        out = apply_unitary(&out, &u.adjoint()).unwrap();
    }
    prop_assert!((out.inner(&s).norm() - 1.0).abs() < 1e-12);
    Ok(())
}

pub fn povm_case() -> impl Strategy<Value = (PureState, Vec<f64>, f64)> {
    (state(), prop::collection::vec(0.0..=1.0f64, 6), 0.0..0.1f64)
}

/// Click-pattern probabilities of polarization-resolved detectors with
/// random efficiencies and dark counts sum to one.
pub fn check_povm((s, effs, dark): (PureState, Vec<f64>, f64)) -> Check {
    let mut dets = Vec::new();
    for (k, m) in (1..=3).enumerate() {
        dets.push(Detector::new(m, Some(Pol::H), effs[2 * k]).with_dark(dark));
        dets.push(Detector::new(m, Some(Pol::V), effs[2 * k + 1]));
    }
    let config = DetectorConfig::new(dets).unwrap();
    let m = MeasuredEnsemble::new(&StateEnsemble::pure(s), &config).unwrap();
    let total: f64 = m.pattern_distribution().iter().map(|(_, p)| p).sum();
    prop_assert!((total - 1.0).abs() < 1e-12, "total {total}");
    Ok(())
}

pub fn loss_case() -> impl Strategy<Value = (PureState, u32, f64, f64)> {
    (state(), 1u32..=3, 0.0..=1.0f64, 0.0..=1.0f64)
}

pub fn check_loss_trace((s, mode, eta, _): (PureState, u32, f64, f64)) -> Check {
    let out = apply_loss(&StateEnsemble::pure(s), &LossChannel::new(mode, eta).unwrap()).unwrap();
    prop_assert!((out.total_probability() - 1.0).abs() < 1e-12);
    Ok(())
}

/// Loss η₁ then η₂ gives the same density matrix as loss η₁η₂.
pub fn check_loss_composes((s, mode, a, b): (PureState, u32, f64, f64)) -> Check {
    let e = StateEnsemble::pure(s);
    let twice = apply_loss(
        &apply_loss(&e, &LossChannel::new(mode, a).unwrap()).unwrap(),
        &LossChannel::new(mode, b).unwrap(),
    )
    .unwrap();
    let once = apply_loss(&e, &LossChannel::new(mode, a * b).unwrap()).unwrap();
    let (x, y) = (rho(&twice), rho(&once));
    for k in x.keys().chain(y.keys()) {
        let d = x.get(k).copied().unwrap_or_default() - y.get(k).copied().unwrap_or_default();
        prop_assert!(d.norm() < 1e-12, "{k:?}: {d}");
    }
    Ok(())
}

/// Two H photons on a 50:50 splitter after a spectral overlap `v`
/// between them: coincidences (1 − v)/2.
pub fn check_hom(v: f64) -> Check {
    let l = layout(2, 2);
    let h = |m| l.index(OpticalMode::new(m, Pol::H)).unwrap();
    let mut occ = Occupation::zeros(l.optical_count());
    occ.counts_mut()[h(1)] = 1;
    occ.counts_mut()[h(2)] = 1;
    let s = PureState::from_terms(l.clone(), [(occ, Complex64::new(1.0, 0.0))]).unwrap();
    let s = apply_unitary(&s, &spectral_overlap(2, v).unwrap()).unwrap();
    let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let bs = ModeUnitary::new(
        vec![OpticalMode::new(1, Pol::H), OpticalMode::new(2, Pol::H)],
        DMatrix::from_row_slice(2, 2, &[r, r, r, -r]),
    )
    .unwrap()
    .on_all_bins(2);
    let out = StateEnsemble::pure(apply_unitary(&s, &bs).unwrap());
    let config =
        DetectorConfig::new(vec![Detector::new(1, None, 1.0), Detector::new(2, None, 1.0)]).unwrap();
    let dist = MeasuredEnsemble::new(&out, &config).unwrap().pattern_distribution();
    let coincidence: f64 = dist.iter().filter(|(p, _)| p.0 == 0b11).map(|(_, q)| q).sum();
    prop_assert!((coincidence - (1.0 - v) / 2.0).abs() < 1e-12, "V={v}: {coincidence}");
    Ok(())
}

fn pol() -> impl Strategy<Value = Pol> {
    prop_oneof![Just(Pol::H), Just(Pol::V)]
}

fn dsl_element(modes: u32) -> impl Strategy<Value = Statement> {
    let m = 1..=modes;
    let pair = (1..=modes, 1..=modes).prop_filter("distinct", |(a, b)| a != b);
    prop_oneof![
        (m.clone(), -360.0..360.0f64).prop_map(|(mode, angle_deg)| Statement::Hwp { mode, angle_deg }),
        (m.clone(), -360.0..360.0f64).prop_map(|(mode, angle_deg)| Statement::Qwp { mode, angle_deg }),
        (m.clone(), pol(), -7.0..7.0f64).prop_map(|(mode, pol, phi)| Statement::Phase { mode, pol, phi }),
        pair.clone().prop_map(|(a, b)| Statement::Pbs { a, b }),
        pair.prop_map(|(a, b)| Statement::Cpbs { a, b }),
        (m.clone(), 0.0..=1.0f64).prop_map(|(mode, eta)| Statement::Loss { mode, eta }),
        (m, 0.0..=1.0f64).prop_map(|(mode, v)| Statement::Overlap { mode, v }),
    ]
}

/// Detector layout per mode: none, one unresolved, H, V, or both.
fn dsl_detectors(modes: u32) -> impl Strategy<Value = Vec<DetectorDecl>> {
    prop::collection::vec((0u8..5, 0.0..=1.0f64, prop::option::of(0.0..0.01f64)), modes as usize)
        .prop_map(|per| {
            let mut out = Vec::new();
            for (i, (kind, eff, dark)) in per.into_iter().enumerate() {
                let mode = i as u32 + 1;
                let pols: &[Option<Pol>] = match kind {
                    0 => &[],
                    1 => &[None],
                    2 => &[Some(Pol::H)],
                    3 => &[Some(Pol::V)],
                    _ => &[Some(Pol::H), Some(Pol::V)],
                };
                for &pol in pols {
                    out.push(DetectorDecl { mode, pol, eff, dark });
                }
            }
            out
        })
}

/// Valid circuits: sources, then elements, detectors and heralds.
pub fn spec() -> impl Strategy<Value = CircuitSpec> {
    (2u32..=8).prop_flat_map(|modes| {
        (
            Just(modes),
            prop::option::of(1u8..=3),
            prop::collection::vec(
                (0.0..0.25f64, prop::option::of(0.0..=1.0f64), prop::option::of(0usize..4)),
                0..=(modes as usize / 2),
            ),
            prop::collection::vec(dsl_element(modes), 0..8),
            dsl_detectors(modes),
            prop::collection::vec(prop::collection::vec(any::<prop::sample::Index>(), 1..4), 0..4),
        )
            .prop_map(|(modes, truncation, sources, elements, dets, heralds)| {
                let mut statements = Vec::new();
                for (k, (eps, gamma, state)) in sources.into_iter().enumerate() {
                    let a = 2 * k as u32 + 1;
                    statements.push(Statement::Source(SourceDecl {
                        a,
                        b: a + 1,
                        // the grammar excludes ε = 0
                        epsilon: eps.max(1e-6),
                        gamma: gamma.filter(|g| *g > 0.0),
                        state: state.map(|i| PairState::ALL[i]),
                    }));
                }
                statements.extend(elements);
                let labels: Vec<String> = dets.iter().map(DetectorDecl::label).collect();
                statements.extend(dets.into_iter().map(Statement::Detector));
                if !labels.is_empty() {
                    for (k, picks) in heralds.into_iter().enumerate() {
                        let mut clicks: Vec<String> =
                            picks.iter().map(|i| labels[i.index(labels.len())].clone()).collect();
                        clicks.sort();
                        clicks.dedup();
                        statements.push(Statement::Herald(HeraldDecl { name: format!("h{k}"), clicks }));
                    }
                }
                CircuitSpec { modes: Some(modes), truncation, statements }
            })
    })
}

pub fn check_round_trip(s: CircuitSpec) -> Check {
    prop_assert!(validate(&s).is_empty(), "{:?}", validate(&s));
    let text = serialize(&s);
    let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
    prop_assert_eq!(&back, &s);
    prop_assert_eq!(serialize(&back), text);
    Ok(())
}

pub fn token_soup() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            Just("modes"), Just("source"), Just("hwp"), Just("qwp"), Just("phase"),
            Just("pbs"), Just("cpbs"), Just("loss"), Just("detector"), Just("herald"),
            Just("overlap"), Just("truncation"), Just("clicks("), Just(")"), Just(","),
            Just("="), Just("eff=0.5"), Just("epsilon=1e-2"), Just("angle=22.5"),
            Just("pol=H"), Just("state=phi+"), Just("eta=nan"), Just("1"), Just("2"),
            Just("99999999999999999999"), Just("-3"), Just("\n"), Just("#"), Just("é"),
            Just("\t"), Just("h = clicks(1H,2)"),
        ],
        0..40,
    )
    .prop_map(|w| w.join(" "))
}

pub fn random_text() -> impl Strategy<Value = String> {
    prop::collection::vec(any::<u8>(), 0..200).prop_map(|b| String::from_utf8_lossy(&b).into_owned())
}

/// Parsing never panics, and any error points at a real character.
pub fn check_error_position(text: String) -> Check {
    if let Err(e) = parse(&text) {
        let lines: Vec<&str> = text.split('\n').collect();
        prop_assert!(e.line >= 1 && e.line <= lines.len(), "line {} of {}: {text:?}", e.line, lines.len());
        let chars = lines[e.line - 1].chars().count();
        prop_assert!(e.column >= 1 && e.column <= chars.max(1), "column {} of {chars}: {text:?}", e.column);
    }
    Ok(())
}
