use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::correction::{
    canonical_swap_table, canonical_teleport_table, polarization_unitary, Bsm2Design,
    CorrectionTable, Pauli,
};
use super::exec::{compile, Executable, Herald};
use super::swap::{
    both_occupied, overlap_elements, swap_detectors, swap_elements, swap_heralds, swap_sources, SwapConfig,
};
use super::ProtocolError;
use crate::analytic::{
    advantage_ratio, classical_rate, teleport_rate_model, AnalyticError, ClassicalStrategy,
};
use crate::circuitdsl::{CircuitSpec, DetectorDecl, HeraldDecl, SourceDecl, Statement};
use crate::detection::{
    sample_histogram, ClickPattern, CoincidenceCounts, DetectorConfig, MeasuredEnsemble,
};
use crate::fock::{Pol, PureState, StateEnsemble};
use crate::optics::{apply_unitary, ModeUnitary};

const BOB: u32 = 1;
const BSM_A: u32 = 6;
const BSM_B: u32 = 7;
const SINGLE_HERALD: &str = "single";
/// Largest support for which the swap-stage output is re-expressed in its
/// eigenbasis before the teleport stage.
const COMPRESS_DIM: usize = 1024;

/// The six teleported inputs: ±1 eigenstates of Z, X and Y, with
/// R = (H + iV)/√2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum InputState {
    H,
    V,
    Plus,
    Minus,
    R,
    L,
}

impl InputState {
    pub const ALL: [InputState; 6] = [
        InputState::H,
        InputState::V,
        InputState::Plus,
        InputState::Minus,
        InputState::R,
        InputState::L,
    ];

    pub fn label(self) -> &'static str {
        match self {
            InputState::H => "H",
            InputState::V => "V",
            InputState::Plus => "+",
            InputState::Minus => "-",
            InputState::R => "R",
            InputState::L => "L",
        }
    }

    pub fn from_label(s: &str) -> Option<InputState> {
        InputState::ALL.into_iter().find(|i| i.label() == s)
    }

    /// Waveplate turning |H⟩ into this state on `mode`.
    pub fn prep_statement(self, mode: u32) -> Option<Statement> {
        match self {
            InputState::H => None,
            InputState::V => Some(Statement::Hwp { mode, angle_deg: 45.0 }),
            InputState::Plus => Some(Statement::Hwp { mode, angle_deg: 22.5 }),
            InputState::Minus => Some(Statement::Hwp { mode, angle_deg: -22.5 }),
            InputState::R => Some(Statement::Qwp { mode, angle_deg: -45.0 }),
            InputState::L => Some(Statement::Qwp { mode, angle_deg: 45.0 }),
        }
    }

    /// The preparation unitary W (identity for H).
    pub fn unitary(self) -> Matrix2<Complex64> {
        let m = match self.prep_statement(0) {
            None => return Matrix2::identity(),
            Some(Statement::Hwp { angle_deg, .. }) => crate::optics::hwp(0, angle_deg.to_radians()),
            Some(Statement::Qwp { angle_deg, .. }) => crate::optics::qwp(0, angle_deg.to_radians()),
            Some(_) => unreachable!("preparations are waveplates"),
        }
        .expect("finite angle");
        let d = m.matrix();
        Matrix2::new(d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)])
    }

    /// W|H⟩.
    pub fn vector(self) -> Vector2<Complex64> {
        self.unitary().column(0).into_owned()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TeleportConfig {
    pub swap: SwapConfig,
    /// Preparation and detection efficiency of the input photon.
    pub eta_p: f64,
    /// End-to-end efficiency of the direct link the protocol competes with.
    pub direct_channel: f64,
    pub input: InputState,
}

impl TeleportConfig {
    /// First-order, lossless, unit-efficiency teleportation.
    pub fn ideal() -> Self {
        TeleportConfig {
            swap: SwapConfig::ideal(1.0),
            eta_p: 1.0,
            direct_channel: 0.01,
            input: InputState::H,
        }
    }

    /// Lab operating point: swap stage at 15 dB with the measured arm
    /// efficiencies, and η_p chosen so the rate model reproduces the
    /// measured teleport efficiency.
    pub fn lab() -> Self {
        TeleportConfig {
            swap: SwapConfig::default(),
            eta_p: 0.39,
            direct_channel: 0.01,
            input: InputState::H,
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.swap.validate()?;
        for (name, value) in [("eta_p", self.eta_p), ("direct_channel", self.direct_channel)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(AnalyticError::Unit { name, value }.into());
            }
        }
        Ok(())
    }
}

fn det(mode: u32, pol: Option<Pol>, eff: f64) -> Statement {
    Statement::Detector(DetectorDecl {
        mode,
        pol,
        eff,
        dark: None,
    })
}

/// Teleportation hardware without the input preparation: the swap
/// circuit, a heralded input photon on 7 (herald 8H), a ± readout Bell
/// measurement on (6, 7) and Bob's H/V analysis on 1.
pub fn teleport_hardware_circuit(cfg: &TeleportConfig) -> Result<CircuitSpec, ProtocolError> {
    cfg.validate()?;
    let s = &cfg.swap;
    let mut st = swap_sources(s);
    st.push(Statement::Source(SourceDecl {
        a: 7,
        b: 8,
        epsilon: s.eps,
        gamma: None,
        state: None,
    }));
    st.extend(overlap_elements(s, &[3, 5, 7]));
    st.extend(swap_elements(s));
    if s.eta6 < 1.0 {
        st.push(Statement::Loss { mode: 6, eta: s.eta6 });
    }
    if cfg.eta_p < 1.0 {
        st.push(Statement::Loss { mode: 7, eta: cfg.eta_p });
    }
    st.push(Statement::Pbs { a: 6, b: 7 });
    st.push(Statement::Hwp { mode: 6, angle_deg: 22.5 });
    st.push(Statement::Hwp { mode: 7, angle_deg: 22.5 });
    st.push(det(1, Some(Pol::H), s.eta1));
    st.push(det(1, Some(Pol::V), s.eta1));
    st.extend(swap_detectors(s));
    for m in [BSM_A, BSM_B] {
        for p in [Pol::H, Pol::V] {
            st.push(det(m, Some(p), 1.0));
        }
    }
    st.push(det(8, Some(Pol::H), s.bsm_eff));
    st.extend(swap_heralds());
    for a in [Pol::H, Pol::V] {
        for b in [Pol::H, Pol::V] {
            st.push(Statement::Herald(HeraldDecl {
                name: format!("tel_6{a}_7{b}"),
                clicks: vec![format!("6{a}"), format!("7{b}")],
            }));
        }
    }
    st.push(Statement::Herald(HeraldDecl {
        name: SINGLE_HERALD.into(),
        clicks: vec!["8H".into()],
    }));
    Ok(CircuitSpec {
        modes: Some(8),
        truncation: Some(s.n_max),
        statements: st,
    })
}

/// Inserts the preparation of `input` on mode 7 right after the sources.
pub fn insert_prep(spec: &CircuitSpec, input: InputState) -> CircuitSpec {
    let mut out = spec.clone();
    if let Some(st) = input.prep_statement(BSM_B) {
        out.statements.insert(spec.after_sources(), st);
    }
    out
}

/// Full teleportation circuit for `cfg.input`.
pub fn build_teleport_circuit(cfg: &TeleportConfig) -> Result<CircuitSpec, ProtocolError> {
    Ok(insert_prep(&teleport_hardware_circuit(cfg)?, cfg.input))
}

#[derive(Clone, Debug, Serialize)]
pub struct TeleportRow {
    pub input: &'static str,
    /// P(Bob reads the expected state | teleport heralded, one Bob click).
    pub fidelity: f64,
    /// Exact c8/c5.
    pub efficiency: f64,
    /// Five-fold (swap herald and input herald) probability per pulse.
    pub p_c5: f64,
    /// Eight-fold probability per pulse.
    pub p_c8: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TeleportResult {
    pub rows: Vec<TeleportRow>,
    pub average_fidelity: f64,
    pub average_efficiency: f64,
    /// A2 of the swap stage (both output photons present).
    pub swap_heralding: f64,
    /// A2·η_a²·η_p/2 with η_a² = η1·η6.
    pub model_efficiency: f64,
    pub direct_channel: f64,
    /// Best classical strategy reaching the observed average fidelity;
    /// absent when that fidelity is at or below 2/3.
    pub classical: Option<ClassicalStrategy>,
    pub advantage_ratio: Option<f64>,
    pub exceeds_two_thirds: bool,
    pub beats_direct: bool,
    pub beats_classical: bool,
}

/// Leaf probabilities of one (swap herald, input) branch of the outcome
/// tree, all per pulse.
#[derive(Clone, Copy, Debug, Default)]
struct Leaf {
    swap: f64,
    /// swap herald and input herald
    c5: f64,
    /// c5 and an accepted teleport herald
    tel: f64,
    /// tel and any click at Bob
    c8: f64,
    bob_h: f64,
    bob_v: f64,
}

impl Leaf {
    fn add(&mut self, o: &Leaf) {
        self.swap += o.swap;
        self.c5 += o.c5;
        self.tel += o.tel;
        self.c8 += o.c8;
        self.bob_h += o.bob_h;
        self.bob_v += o.bob_v;
    }
}

/// Heralds mapped onto one detector subset.
fn remap(ex: &Executable, sub: &DetectorConfig, h: &Herald) -> Result<(ClickPattern, ClickPattern), ProtocolError> {
    let map = |mask: ClickPattern| -> Result<u32, ProtocolError> {
        ex.detectors.labels(mask).into_iter().try_fold(0u32, |m, l| {
            let i = sub
                .position(l)
                .ok_or_else(|| ProtocolError::Layout(format!("herald `{}` spans stages", h.name)))?;
            Ok(m | 1 << i)
        })
    };
    Ok((ClickPattern(map(h.clicks)?), ClickPattern(map(h.silent)?)))
}

fn apply_pol(ens: &StateEnsemble, spatial: u32, m: &Matrix2<Complex64>) -> Result<StateEnsemble, ProtocolError> {
    let u: ModeUnitary = polarization_unitary(spatial, m).on_all_bins(ens.layout().spectral_bins());
    Ok(ens.map_states(|s| apply_unitary(s, &u))?)
}

/// A compiled teleport circuit split into the swap stage and the
/// teleport stage. Sources that never meet the swap stage (the input pair)
/// are left out of it and joined afterwards, together with their
/// single-source operations.
struct Plan {
    ex: Executable,
    stage_a: Vec<usize>,
    stage_b: Vec<usize>,
    spectators: Vec<[u32; 2]>,
    spectator: PureState,
    swap_det: DetectorConfig,
    swaps: Vec<(String, ClickPattern, ClickPattern)>,
    /// Teleport-stage heralds and Bob's analysis, measured together.
    tel_det: DetectorConfig,
    tels: Vec<(String, ClickPattern, ClickPattern)>,
    single: (ClickPattern, ClickPattern),
    bob_any: u32,
    bob_h: ClickPattern,
    bob_v: ClickPattern,
    swap_table: CorrectionTable,
    tel_table: CorrectionTable,
    eta_a2: f64,
    eta_p: f64,
}

/// Product of loss transmissions on `mode` and the first detector on it.
fn mode_efficiency(spec: &CircuitSpec, ex: &Executable, mode: u32) -> f64 {
    let loss: f64 = spec
        .statements
        .iter()
        .filter_map(|s| match s {
            Statement::Loss { mode: m, eta } if *m == mode => Some(*eta),
            _ => None,
        })
        .product();
    let det = ex
        .detectors
        .detectors()
        .iter()
        .find(|d| d.spatial == mode)
        .map_or(1.0, |d| d.efficiency);
    loss * det
}

fn plan(spec: &CircuitSpec) -> Result<Plan, ProtocolError> {
    let ex = compile(spec)?;
    if ex.unheralded_modes() != [BOB] {
        return Err(ProtocolError::Layout(format!(
            "teleport circuits analyze mode {BOB} only, found {:?}",
            ex.unheralded_modes()
        )));
    }
    if ex.ops[..ex.first_op_touching(BSM_A)].iter().any(|op| op.touches(BOB)) {
        return Err(ProtocolError::Layout("elements on Bob's mode are not supported".into()));
    }
    let by_prefix = |p: &str| -> Vec<Herald> {
        ex.heralds.iter().filter(|h| h.name.starts_with(p)).cloned().collect()
    };
    let (swaps, tels) = (by_prefix("swap_"), by_prefix("tel_"));
    let single = ex
        .herald(SINGLE_HERALD)
        .cloned()
        .ok_or_else(|| ProtocolError::Layout(format!("missing herald `{SINGLE_HERALD}`")))?;
    if swaps.is_empty() || tels.is_empty() {
        return Err(ProtocolError::Layout("need `swap_*` and `tel_*` heralds".into()));
    }
    let mask_of = |hs: &[&Herald]| hs.iter().fold(0u32, |m, h| m | h.constrained());
    let swap_mask = mask_of(&swaps.iter().collect::<Vec<_>>());
    let tel_mask = mask_of(&tels.iter().chain([&single]).collect::<Vec<_>>());
    let keep = |mask: u32| {
        let labels: Vec<String> = ex
            .detectors
            .labels(ClickPattern(mask))
            .into_iter()
            .map(String::from)
            .collect();
        ex.detectors.subset(|d| labels.contains(&d.label))
    };
    let swap_det = keep(swap_mask);
    let bob_mask = ex
        .detectors
        .detectors()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.spatial == BOB)
        .fold(0u32, |m, (i, _)| m | 1 << i);
    let tel_det = keep(tel_mask | bob_mask);
    let bob_any = tel_det
        .detectors()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.spatial == BOB)
        .fold(0u32, |m, (i, _)| m | 1 << i);
    let layout_err = |e: crate::detection::DetectionError| ProtocolError::Layout(e.to_string());
    let bob_h = tel_det.pattern(&["1H"]).map_err(layout_err)?;
    let bob_v = tel_det.pattern(&["1V"]).map_err(layout_err)?;

    let split = ex.first_op_touching(BSM_A);
    let swap_modes: Vec<u32> = swap_det.detectors().iter().map(|d| d.spatial).collect();
    let spectators: Vec<[u32; 2]> = ex
        .sources
        .iter()
        .map(|p| [p.spatial_pair.0, p.spatial_pair.1])
        .filter(|pair| {
            !pair.iter().any(|m| swap_modes.contains(m))
                && ex.ops[..split].iter().all(|op| {
                    let sp = op.spatial();
                    sp.iter().all(|m| pair.contains(m)) || !sp.iter().any(|m| pair.contains(m))
                })
        })
        .collect();
    let deferred = |i: &usize| {
        let sp = ex.ops[*i].spatial();
        spectators.iter().any(|pair| sp.iter().all(|m| pair.contains(m)))
    };
    let stage_a: Vec<usize> = (0..split).filter(|i| !deferred(i)).collect();
    let stage_b: Vec<usize> = (0..split).filter(deferred).chain(split..ex.ops.len()).collect();
    let spectator = ex.source_state(|p| spectators.contains(&[p.spatial_pair.0, p.spatial_pair.1]))?;

    let design = if spec.statements.iter().any(|s| matches!(s, Statement::Cpbs { .. })) {
        Bsm2Design::Circular
    } else {
        Bsm2Design::Plain
    };
    let swaps = swaps
        .iter()
        .map(|h| remap(&ex, &swap_det, h).map(|(c, s)| (h.name.clone(), c, s)))
        .collect::<Result<_, _>>()?;
    let tels = tels
        .iter()
        .map(|h| remap(&ex, &tel_det, h).map(|(c, s)| (h.name.clone(), c, s)))
        .collect::<Result<_, _>>()?;
    let single = remap(&ex, &tel_det, &single)?;
    let eta_a2 = mode_efficiency(spec, &ex, BOB) * mode_efficiency(spec, &ex, BSM_A);
    let eta_p = mode_efficiency(spec, &ex, BSM_B);
    Ok(Plan {
        stage_a,
        stage_b,
        spectators,
        spectator,
        swap_det,
        swaps,
        tel_det,
        tels,
        single,
        bob_any,
        bob_h,
        bob_v,
        swap_table: canonical_swap_table(design),
        tel_table: canonical_teleport_table(),
        eta_a2,
        eta_p,
        ex,
    })
}

/// Outcome tree for one input. `prep` is applied after the swap stage
/// (it commutes with everything there); `analysis` sets Bob's basis.
fn leaves(
    plan: &Plan,
    swapped: &[(f64, f64, StateEnsemble)],
    prep: Option<InputState>,
    analysis: InputState,
) -> Result<Vec<Leaf>, ProtocolError> {
    let ex = &plan.ex;
    let w_dag = analysis.unitary().adjoint();
    swapped
        .par_iter()
        .map(|(p_swap, _, cond)| {
            let mut ens = cond.map_states(|s| s.product_disjoint(&plan.spectator))?;
            if let Some(i) = prep {
                ens = apply_pol(&ens, BSM_B, &i.unitary())?;
            }
            ens = ex.run_indices(ens, &plan.stage_b)?;
            let mut leaf = Leaf {
                swap: *p_swap,
                ..Leaf::default()
            };
            // Bob's corrections act on mode 1 only, so each distinct one is
            // applied to the whole state and the teleport detectors and Bob's
            // are read out jointly.
            let mut fixes: Vec<Pauli> = Vec::new();
            for (name, ..) in &plan.tels {
                let p = plan.tel_table.get(name)?;
                if !fixes.contains(&p) {
                    fixes.push(p);
                }
            }
            for (k, fix) in fixes.iter().enumerate() {
                let e = apply_pol(&ens, BOB, &(w_dag * fix.matrix()))?;
                let dist = MeasuredEnsemble::new(&e, &plan.tel_det)?.pattern_distribution();
                let accepts = |p: ClickPattern, c: ClickPattern, s: ClickPattern| {
                    p.0 & c.0 == c.0 && p.0 & s.0 == 0
                };
                if k == 0 {
                    leaf.c5 = p_swap
                        * dist
                            .iter()
                            .filter(|(p, _)| accepts(*p, plan.single.0, plan.single.1))
                            .map(|(_, q)| q)
                            .sum::<f64>();
                }
                for (name, c, s) in &plan.tels {
                    if plan.tel_table.get(name)? != *fix {
                        continue;
                    }
                    let c = ClickPattern(c.0 | plan.single.0 .0);
                    let s = ClickPattern(s.0 | plan.single.1 .0);
                    for &(p, q) in dist.iter().filter(|(p, _)| accepts(*p, c, s)) {
                        let w = p_swap * q;
                        leaf.tel += w;
                        let bob = ClickPattern(p.0 & plan.bob_any);
                        if bob.0 != 0 {
                            leaf.c8 += w;
                        }
                        if bob == plan.bob_h {
                            leaf.bob_h += w;
                        } else if bob == plan.bob_v {
                            leaf.bob_v += w;
                        }
                    }
                }
            }
            Ok(leaf)
        })
        .collect()
}

/// Swap stage: every accepted swap herald with its probability, the
/// presence probability of photons 1 and 6, and the corrected state.
fn swap_stage(plan: &Plan) -> Result<Vec<(f64, f64, StateEnsemble)>, ProtocolError> {
    let ex = &plan.ex;
    let start = ex.source_state(|p| !plan.spectators.contains(&[p.spatial_pair.0, p.spatial_pair.1]))?;
    let ens = ex.run_indices(StateEnsemble::pure(start), &plan.stage_a)?;
    let ma = MeasuredEnsemble::new(&ens, &plan.swap_det)?;
    let out: Vec<Option<(f64, f64, StateEnsemble)>> = plan
        .swaps
        .par_iter()
        .map(|(name, c, s)| {
            let hs = ma.herald_partial(*c, *s);
            let Some(cond) = hs.conditional else { return Ok(None) };
            let cond = cond.compress(COMPRESS_DIM);
            let presence = both_occupied(&cond, (BOB, BSM_A));
            let fixed = apply_pol(&cond, BSM_A, &plan.swap_table.get(name)?.matrix())?;
            Ok(Some((hs.probability, presence, fixed)))
        })
        .collect::<Result<_, ProtocolError>>()?;
    let out: Vec<_> = out.into_iter().flatten().collect();
    if out.is_empty() {
        return Err(ProtocolError::ZeroHerald);
    }
    Ok(out)
}

fn row(input: InputState, leaves: &[Leaf]) -> Result<TeleportRow, ProtocolError> {
    let mut t = Leaf::default();
    for l in leaves {
        t.add(l);
    }
    if t.c5 <= 0.0 || t.bob_h + t.bob_v <= 0.0 {
        return Err(ProtocolError::ZeroHerald);
    }
    Ok(TeleportRow {
        input: input.label(),
        fidelity: t.bob_h / (t.bob_h + t.bob_v),
        efficiency: t.c8 / t.c5,
        p_c5: t.c5,
        p_c8: t.c8,
    })
}

fn summarize(
    rows: Vec<TeleportRow>,
    swap_heralding: f64,
    eta_a2: f64,
    eta_p: f64,
    direct_channel: f64,
) -> Result<TeleportResult, ProtocolError> {
    let n = rows.len() as f64;
    let average_fidelity = rows.iter().map(|r| r.fidelity).sum::<f64>() / n;
    let average_efficiency = rows.iter().map(|r| r.efficiency).sum::<f64>() / n;
    let model_efficiency = teleport_rate_model(swap_heralding, eta_a2.sqrt(), eta_p)?;
    let classical = classical_rate(average_fidelity, direct_channel).ok();
    let advantage = classical
        .as_ref()
        .and_then(|c| advantage_ratio(average_efficiency, c.rate).ok());
    Ok(TeleportResult {
        average_fidelity,
        average_efficiency,
        swap_heralding,
        model_efficiency,
        direct_channel,
        exceeds_two_thirds: average_fidelity > 2.0 / 3.0,
        beats_direct: average_efficiency > direct_channel,
        beats_classical: classical.as_ref().is_some_and(|c| average_efficiency > c.rate),
        classical,
        advantage_ratio: advantage,
        rows,
    })
}

fn run_plan(plan: &Plan, inputs: &[InputState], direct_channel: f64) -> Result<TeleportResult, ProtocolError> {
    let swapped = swap_stage(plan)?;
    let total: f64 = swapped.iter().map(|s| s.0).sum();
    let heralding = swapped.iter().map(|s| s.0 * s.1).sum::<f64>() / total;
    let rows = inputs
        .iter()
        .map(|&i| row(i, &leaves(plan, &swapped, Some(i), i)?))
        .collect::<Result<Vec<_>, _>>()?;
    summarize(rows, heralding, plan.eta_a2, plan.eta_p, direct_channel)
}

/// Exact teleportation for each of `inputs` on the circuit for `cfg`.
pub fn run_teleport(cfg: &TeleportConfig, inputs: &[InputState]) -> Result<TeleportResult, ProtocolError> {
    let plan = plan(&teleport_hardware_circuit(cfg)?)?;
    run_plan(&plan, inputs, cfg.direct_channel)
}

/// Exact teleportation on a hardware circuit (no input preparation) that
/// follows the standard layout: Bob on 1, Bell measurement on 6 and 7,
/// heralds named `swap_*`, `tel_*` and `single`.
pub fn run_teleport_spec(
    spec: &CircuitSpec,
    inputs: &[InputState],
    direct_channel: f64,
) -> Result<TeleportResult, ProtocolError> {
    run_plan(&plan(spec)?, inputs, direct_channel)
}

#[derive(Clone, Debug, Serialize)]
pub struct TeleportMonteCarlo {
    pub input: &'static str,
    pub exact_efficiency: f64,
    pub counts: CoincidenceCounts,
    /// R̃Tel = c8/c5; NaN without five-fold events.
    pub efficiency_estimate: f64,
    pub sigma: f64,
}

/// Samples `shots` pulses of the teleport circuit for one input.
pub fn run_teleport_montecarlo(
    cfg: &TeleportConfig,
    shots: u64,
    seed: u64,
) -> Result<TeleportMonteCarlo, ProtocolError> {
    let plan = plan(&teleport_hardware_circuit(cfg)?)?;
    let swapped = swap_stage(&plan)?;
    let tree = leaves(&plan, &swapped, Some(cfg.input), cfg.input)?;
    let exact = row(cfg.input, &tree)?;

    // Disjoint leaves: no herald, then per swap herald: no input herald,
    // c5 without teleport herald, teleport herald without Bob, c8.
    let mut weights = Vec::with_capacity(1 + 4 * tree.len());
    let total: f64 = tree.iter().map(|l| l.swap).sum();
    weights.push((1.0 - total).max(0.0));
    for l in &tree {
        weights.push((l.swap - l.c5).max(0.0));
        weights.push((l.c5 - l.tel).max(0.0));
        weights.push((l.tel - l.c8).max(0.0));
        weights.push(l.c8);
    }
    let hist = sample_histogram(&weights, shots, seed)?;
    let mut counts = CoincidenceCounts {
        shots,
        seed,
        ..CoincidenceCounts::default()
    };
    for (k, &n) in hist.iter().enumerate().skip(1) {
        let slot = (k - 1) % 4;
        counts.c4 += n;
        if slot >= 1 {
            counts.c5 += n;
        }
        if slot == 3 {
            counts.c8 += n;
        }
    }
    let (efficiency_estimate, sigma) = if counts.c5 > 0 {
        let c5 = counts.c5 as f64;
        let p = counts.c8 as f64 / c5;
        (p, (p * (1.0 - p) / c5).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(TeleportMonteCarlo {
        input: cfg.input.label(),
        exact_efficiency: exact.efficiency,
        counts,
        efficiency_estimate,
        sigma,
    })
}
