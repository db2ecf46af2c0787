use nalgebra::Matrix4;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::correction::{
    canonical_swap_table, correct_second, derive_swap_corrections, herald_subset, output_pair,
    swap_herald_name, swap_readouts, Bsm2Design, CorrectionTable, Pauli,
};
use super::exec::{compile, Executable};
use super::ProtocolError;
use crate::analytic::{a2_estimator, bell_fidelity, noise_budget, NoiseBudget};
use crate::circuitdsl::{CircuitSpec, DetectorDecl, HeraldDecl, SourceDecl, Statement};
use crate::detection::{
    sample_histogram, ClickPattern, CoincidenceCounts, MeasuredEnsemble,
};
use crate::fock::{FockError, FockSectorWeights, Pol, QubitDensityMatrix};

/// Overall detection efficiency of arm 1 (Alice's output photon).
pub const LAB_ETA1: f64 = 0.611;
/// Overall detection efficiency of arm 6 (Bob's output photon).
pub const LAB_ETA6: f64 = 0.628;
/// System efficiency of one SNSPD.
pub const LAB_SNSPD: f64 = 0.75;

/// Parameters of the three-source swapping experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SwapConfig {
    /// Single-pair probability of the outer sources.
    pub eps: f64,
    /// Pump scaling of the midpoint source (emits γε).
    pub gamma: f64,
    /// End-to-end channel efficiency; photons 3 and 4 each see √η.
    pub eta: f64,
    pub n_max: u8,
    pub eta1: f64,
    pub eta6: f64,
    /// Efficiency of each BSM detector.
    pub bsm_eff: f64,
    /// Two-photon overlap at each BSM beam splitter.
    pub visibility: f64,
    pub bsm2: Bsm2Design,
}

impl Default for SwapConfig {
    fn default() -> Self {
        SwapConfig {
            eps: 0.02,
            gamma: 1.0,
            eta: 0.03,
            n_max: 2,
            eta1: LAB_ETA1,
            eta6: LAB_ETA6,
            bsm_eff: LAB_SNSPD,
            visibility: 1.0,
            bsm2: Bsm2Design::Circular,
        }
    }
}

impl SwapConfig {
    /// First-order, lossless detectors and perfect overlap at channel `eta`.
    pub fn ideal(eta: f64) -> Self {
        SwapConfig {
            eta,
            n_max: 1,
            eta1: 1.0,
            eta6: 1.0,
            bsm_eff: 1.0,
            ..SwapConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        use crate::analytic::AnalyticError;
        if !(self.eps > 0.0 && self.eps < 0.25) {
            return Err(AnalyticError::Epsilon(self.eps).into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AnalyticError::Gamma(self.gamma).into());
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(AnalyticError::Eta(self.eta).into());
        }
        for (name, value) in [
            ("eta1", self.eta1),
            ("eta6", self.eta6),
            ("bsm_eff", self.bsm_eff),
            ("visibility", self.visibility),
        ] {
            if !(0.0..=1.0).contains(&value) {
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

fn source(a: u32, b: u32, eps: f64, gamma: Option<f64>) -> Statement {
    Statement::Source(SourceDecl {
        a,
        b,
        epsilon: eps,
        gamma,
        state: None,
    })
}

/// Field part of the swap: channel loss and both analyzers.
pub(crate) fn swap_elements(cfg: &SwapConfig) -> Vec<Statement> {
    let mut st = Vec::new();
    if cfg.eta < 1.0 {
        let half = cfg.eta.sqrt();
        st.push(Statement::Loss { mode: 3, eta: half });
        st.push(Statement::Loss { mode: 4, eta: half });
    }
    st.push(Statement::Pbs { a: 2, b: 3 });
    st.push(Statement::Hwp { mode: 2, angle_deg: 22.5 });
    st.push(Statement::Hwp { mode: 3, angle_deg: 22.5 });
    match cfg.bsm2 {
        Bsm2Design::Circular => st.push(Statement::Cpbs { a: 4, b: 5 }),
        Bsm2Design::Plain => {
            st.push(Statement::Pbs { a: 4, b: 5 });
            st.push(Statement::Hwp { mode: 4, angle_deg: 22.5 });
            st.push(Statement::Hwp { mode: 5, angle_deg: 22.5 });
        }
    }
    st
}

pub(crate) fn swap_detectors(cfg: &SwapConfig) -> Vec<Statement> {
    let mut st = Vec::new();
    for m in 2..=5 {
        for p in [Pol::H, Pol::V] {
            st.push(det(m, Some(p), cfg.bsm_eff));
        }
    }
    st
}

pub(crate) fn swap_heralds() -> Vec<Statement> {
    swap_readouts()
        .into_iter()
        .map(|p| {
            Statement::Herald(HeraldDecl {
                name: swap_herald_name(p),
                clicks: (0..4).map(|k| format!("{}{}", k + 2, p[k])).collect(),
            })
        })
        .collect()
}

pub(crate) fn swap_sources(cfg: &SwapConfig) -> Vec<Statement> {
    vec![
        source(1, 2, cfg.eps, None),
        source(3, 4, cfg.eps, Some(cfg.gamma)),
        source(5, 6, cfg.eps, None),
    ]
}

pub(crate) fn overlap_elements(cfg: &SwapConfig, modes: &[u32]) -> Vec<Statement> {
    if cfg.visibility < 1.0 {
        modes
            .iter()
            .map(|&mode| Statement::Overlap {
                mode,
                v: cfg.visibility,
            })
            .collect()
    } else {
        Vec::new()
    }
}

/// Circuit of the swapping experiment: sources (1,2), (3,4) at γε and
/// (5,6); √η loss on 3 and 4; BSM I on (2,3) and BSM II on (4,5).
pub fn build_swap_circuit(cfg: &SwapConfig) -> Result<CircuitSpec, ProtocolError> {
    cfg.validate()?;
    let mut st = swap_sources(cfg);
    st.extend(overlap_elements(cfg, &[3, 5]));
    st.extend(swap_elements(cfg));
    st.push(det(1, None, cfg.eta1));
    st.extend(swap_detectors(cfg));
    st.push(det(6, None, cfg.eta6));
    st.extend(swap_heralds());
    Ok(CircuitSpec {
        modes: Some(6),
        truncation: Some(cfg.n_max),
        statements: st,
    })
}

/// One accepted herald after correction.
#[derive(Clone, Debug, Serialize)]
pub struct OutcomeSummary {
    pub herald: String,
    pub correction: Pauli,
    pub probability: f64,
    pub a2: f64,
    /// Fidelity of the corrected two-photon state; absent without one.
    pub fidelity: Option<f64>,
    pub presence: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SwapResult {
    pub output_modes: (u32, u32),
    /// Herald-weighted sector weights of the output pair.
    pub sectors: FockSectorWeights,
    pub overflow: f64,
    #[serde(skip)]
    pub rho11: QubitDensityMatrix,
    pub fidelity: f64,
    /// Probability per pulse that some herald fires.
    pub herald_probability: f64,
    /// Four-fold (accepted herald) and six-fold (plus both outputs)
    /// probabilities per pulse.
    pub p_c4: f64,
    pub p_c6: f64,
    /// Probability that both output modes hold at least one photon, given
    /// an accepted herald (A2 with higher photon numbers folded in).
    pub heralding_efficiency: f64,
    /// P(c6) / (P(c4)·η1·η6): the value the Ã2 estimator converges to.
    /// Exceeds `heralding_efficiency` when multi-photon terms make the
    /// threshold detectors click more often than η.
    pub a2_estimator_exact: f64,
    pub outcomes: Vec<OutcomeSummary>,
    pub noise_budget: Option<NoiseBudget>,
    /// Probability removed by amplitude pruning.
    pub discarded: f64,
}

/// Exact evaluation of the swap circuit for `cfg` with the frozen
/// correction table.
pub fn run_swap_exact(cfg: &SwapConfig) -> Result<SwapResult, ProtocolError> {
    let spec = build_swap_circuit(cfg)?;
    let budget = noise_budget(cfg.gamma, cfg.eps, cfg.eta)?;
    evaluate(&spec, &canonical_swap_table(cfg.bsm2), Some(budget))
}

/// Exact evaluation of any heralded-pair circuit with corrections derived
/// from its ideal version.
pub fn run_swap_spec(spec: &CircuitSpec) -> Result<SwapResult, ProtocolError> {
    let table = derive_swap_corrections(spec)?;
    evaluate(spec, &table, spec_budget(spec))
}

/// Leading-order budget for a three-source circuit (outer sources sharing
/// ε, channel = product of all loss elements).
fn spec_budget(spec: &CircuitSpec) -> Option<NoiseBudget> {
    let sources: Vec<&SourceDecl> = spec.sources().collect();
    if sources.len() != 3 || sources[0].epsilon != sources[2].epsilon {
        return None;
    }
    let eta: f64 = spec
        .statements
        .iter()
        .filter_map(|s| match s {
            Statement::Loss { eta, .. } => Some(*eta),
            _ => None,
        })
        .product();
    noise_budget(sources[1].gamma_or_default(), sources[0].epsilon, eta).ok()
}

/// Efficiency of the detectors watching `spatial` (the first one found).
fn arm_efficiency(ex: &Executable, spatial: u32) -> f64 {
    ex.detectors
        .detectors()
        .iter()
        .find(|d| d.spatial == spatial)
        .map_or(1.0, |d| d.efficiency)
}

/// Bitmask of detectors on `spatial`.
fn mode_mask(ex: &Executable, spatial: u32) -> u32 {
    ex.detectors
        .detectors()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.spatial == spatial)
        .fold(0, |m, (i, _)| m | 1 << i)
}

/// Probability that both modes of `pair` are occupied.
pub(crate) fn both_occupied(ens: &crate::fock::StateEnsemble, pair: (u32, u32)) -> f64 {
    let total = ens.total_probability();
    if total <= 0.0 {
        return 0.0;
    }
    let hit: f64 = ens
        .branches()
        .iter()
        .map(|b| {
            b.weight
                * b.state
                    .iter()
                    .filter(|(occ, _)| ens.photons_in(occ, pair.0) > 0 && ens.photons_in(occ, pair.1) > 0)
                    .map(|(_, a)| a.norm_sqr())
                    .sum::<f64>()
        })
        .sum();
    hit / total
}

struct Classified {
    patterns: Vec<(ClickPattern, f64)>,
    c4: Vec<bool>,
    c6: Vec<bool>,
}

fn classify(ex: &Executable, measured: &MeasuredEnsemble, pair: (u32, u32)) -> Classified {
    let patterns = measured.pattern_distribution();
    let (m1, m2) = (mode_mask(ex, pair.0), mode_mask(ex, pair.1));
    let c4: Vec<bool> = patterns
        .iter()
        .map(|(p, _)| ex.heralds.iter().any(|h| h.accepts(*p)))
        .collect();
    let c6 = patterns
        .iter()
        .zip(&c4)
        .map(|((p, _), &ok)| ok && p.0 & m1 != 0 && p.0 & m2 != 0)
        .collect();
    Classified { patterns, c4, c6 }
}

fn evaluate(
    spec: &CircuitSpec,
    table: &CorrectionTable,
    budget: Option<NoiseBudget>,
) -> Result<SwapResult, ProtocolError> {
    let ex = compile(spec)?;
    let pair = output_pair(&ex)?;
    let ens = ex.evolve()?;

    let full = MeasuredEnsemble::new(&ens, &ex.detectors)?;
    let cls = classify(&ex, &full, pair);
    let sum = |mask: &[bool]| -> f64 {
        cls.patterns
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|((_, p), _)| p)
            .sum()
    };
    let (p_c4, p_c6) = (sum(&cls.c4), sum(&cls.c6));

    let (sub, heralds) = herald_subset(&ex, pair);
    let measured = MeasuredEnsemble::new(&ens, &sub)?;
    let per: Vec<Result<Option<(OutcomeSummary, Matrix4<Complex64>, FockSectorWeights, f64)>, ProtocolError>> =
        heralds
            .par_iter()
            .map(|(h, clicks, silent)| {
                let hs = measured.herald_partial(*clicks, *silent);
                let Some(cond) = hs.conditional else {
                    return Ok(None);
                };
                let correction = table.get(&h.name)?;
                let red = crate::fock::sector_decomposition(&cond, pair)?;
                let block = correct_second(red.weighted_block(), correction);
                let tr = block.trace().re;
                let fidelity = if tr > 0.0 {
                    Some(bell_fidelity(&QubitDensityMatrix::new(
                        block / Complex64::new(tr, 0.0),
                    )?))
                } else {
                    None
                };
                let summary = OutcomeSummary {
                    herald: h.name.clone(),
                    correction,
                    probability: hs.probability,
                    a2: red.sectors.a2,
                    fidelity,
                    presence: both_occupied(&cond, pair),
                };
                Ok(Some((summary, block, red.sectors, red.overflow)))
            })
            .collect();

    let mut outcomes = Vec::new();
    let mut block = Matrix4::<Complex64>::zeros();
    let (mut a0, mut a1, mut a2, mut over, mut total) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut presence = 0.0;
    for r in per {
        let Some((summary, b, s, o)) = r? else { continue };
        let w = summary.probability;
        block += b * Complex64::new(w, 0.0);
        a0 += w * s.a0;
        a1 += w * s.a1;
        a2 += w * s.a2;
        over += w * o;
        presence += w * summary.presence;
        total += w;
        outcomes.push(summary);
    }
    if total <= 0.0 {
        return Err(ProtocolError::ZeroHerald);
    }
    let tr = block.trace().re;
    if tr <= 0.0 {
        return Err(FockError::EmptyTwoPhotonSector {
            a0: a0 / total,
            a1: a1 / total,
            overflow: over / total,
        }
        .into());
    }
    let rho11 = QubitDensityMatrix::new(block / Complex64::new(tr, 0.0))?;
    let (e1, e2) = (arm_efficiency(&ex, pair.0), arm_efficiency(&ex, pair.1));
    let a2_estimator_exact = if p_c4 > 0.0 { p_c6 / (p_c4 * e1 * e2) } else { 0.0 };
    Ok(SwapResult {
        output_modes: pair,
        sectors: FockSectorWeights {
            a0: a0 / total,
            a1: a1 / total,
            a2: a2 / total,
        },
        overflow: over / total,
        fidelity: bell_fidelity(&rho11),
        rho11,
        herald_probability: total,
        p_c4,
        p_c6,
        heralding_efficiency: presence / total,
        a2_estimator_exact,
        outcomes,
        noise_budget: budget,
        discarded: ens.discarded(),
    })
}

/// Sampled coincidence counts next to the exact evaluation.
#[derive(Clone, Debug, Serialize)]
pub struct SwapMonteCarlo {
    pub exact: SwapResult,
    pub counts: CoincidenceCounts,
    /// Ã2 = c6 / (c4·η1·η6); NaN when no four-fold event was drawn.
    pub a2_estimate: f64,
    /// Binomial standard error of `a2_estimate`.
    pub sigma: f64,
}

/// Samples `shots` pulses of the swap circuit for `cfg`.
pub fn run_swap_montecarlo(
    cfg: &SwapConfig,
    shots: u64,
    seed: u64,
) -> Result<SwapMonteCarlo, ProtocolError> {
    let spec = build_swap_circuit(cfg)?;
    let budget = noise_budget(cfg.gamma, cfg.eps, cfg.eta)?;
    let exact = evaluate(&spec, &canonical_swap_table(cfg.bsm2), Some(budget))?;
    sample_swap(&spec, exact, shots, seed)
}

/// Monte Carlo counterpart of [`run_swap_spec`].
pub fn run_swap_spec_montecarlo(
    spec: &CircuitSpec,
    shots: u64,
    seed: u64,
) -> Result<SwapMonteCarlo, ProtocolError> {
    let exact = run_swap_spec(spec)?;
    sample_swap(spec, exact, shots, seed)
}

fn sample_swap(
    spec: &CircuitSpec,
    exact: SwapResult,
    shots: u64,
    seed: u64,
) -> Result<SwapMonteCarlo, ProtocolError> {
    let ex = compile(spec)?;
    let pair = exact.output_modes;
    let ens = ex.evolve()?;
    let full = MeasuredEnsemble::new(&ens, &ex.detectors)?;
    let cls = classify(&ex, &full, pair);
    let weights: Vec<f64> = cls.patterns.iter().map(|(_, p)| *p).collect();
    let hist = sample_histogram(&weights, shots, seed)?;
    let mut counts = CoincidenceCounts {
        shots,
        seed,
        ..CoincidenceCounts::default()
    };
    for (i, &n) in hist.iter().enumerate() {
        if cls.c4[i] {
            counts.c4 += n;
        }
        if cls.c6[i] {
            counts.c6 += n;
        }
    }
    let (e1, e2) = (arm_efficiency(&ex, pair.0), arm_efficiency(&ex, pair.1));
    let (a2_estimate, sigma) = if counts.c4 > 0 {
        let c4 = counts.c4 as f64;
        let p = counts.c6 as f64 / c4;
        (
            a2_estimator(counts.c6 as f64, c4, e1, e2)?,
            (p * (1.0 - p) / c4).sqrt() / (e1 * e2),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(SwapMonteCarlo {
        exact,
        counts,
        a2_estimate,
        sigma,
    })
}
