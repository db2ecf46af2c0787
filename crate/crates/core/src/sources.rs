//! SPDC pair sources.
//!
//! A source is the product of an H-polarized and a V-polarized two-mode
//! squeezer with common amplitude λ, so the number of pairs `n` is
//! distributed as `(n+1) λ^{2n} (1−λ²)²`. The operational parameter is
//! ε = P(exactly one pair) = 2λ²(1−λ²)².

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{FockError, ModeLayout, Occupation, OpticalMode, Pol, PureState};

/// Largest single-pair probability reachable by the squeezer model (λ² = 1/3).
pub const MAX_EPSILON: f64 = 8.0 / 27.0;

pub const MAX_PAIRS: u8 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("epsilon {0} must lie in (0, 0.25)")]
    BadEpsilon(f64),
    #[error("no squeezing amplitude gives single-pair probability {0} (maximum 8/27)")]
    NoRoot(f64),
    #[error("gamma {0} must lie in [0, 1]")]
    BadGamma(f64),
    #[error("pair truncation {0} must be between 1 and 3")]
    BadTruncation(u8),
    #[error("visibility {0} must lie in [0, 1]")]
    BadVisibility(f64),
    #[error("source modes must differ (got {0} twice)")]
    SameModes(u32),
    #[error("herald mode {herald} is not one of the source modes ({a}, {b})")]
    HeraldNotInPair { herald: u32, a: u32, b: u32 },
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Which Bell state the single-pair term carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum PairState {
    #[default]
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl PairState {
    pub const ALL: [PairState; 4] = [
        PairState::PhiPlus,
        PairState::PhiMinus,
        PairState::PsiPlus,
        PairState::PsiMinus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PairState::PhiPlus => "phi+",
            PairState::PhiMinus => "phi-",
            PairState::PsiPlus => "psi+",
            PairState::PsiMinus => "psi-",
        }
    }

    pub fn from_label(s: &str) -> Option<PairState> {
        PairState::ALL.into_iter().find(|p| p.label() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpdcParams {
    pub epsilon: f64,
    pub gamma: f64,
    pub n_max: u8,
    pub spatial_pair: (u32, u32),
    pub state: PairState,
    pub visibility: f64,
}

impl SpdcParams {
    pub fn new(a: u32, b: u32, epsilon: f64) -> Self {
        SpdcParams {
            epsilon,
            gamma: 1.0,
            n_max: 2,
            spatial_pair: (a, b),
            state: PairState::PhiPlus,
            visibility: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if !(self.epsilon > 0.0 && self.epsilon < 0.25) {
            return Err(SourceError::BadEpsilon(self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(SourceError::BadGamma(self.gamma));
        }
        if !(1..=MAX_PAIRS).contains(&self.n_max) {
            return Err(SourceError::BadTruncation(self.n_max));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(SourceError::BadVisibility(self.visibility));
        }
        if self.spatial_pair.0 == self.spatial_pair.1 {
            return Err(SourceError::SameModes(self.spatial_pair.0));
        }
        Ok(())
    }

    /// Single-pair probability actually emitted (γε).
    pub fn effective_epsilon(&self) -> f64 {
        self.gamma * self.epsilon
    }
}

/// Smallest λ > 0 with 2λ²(1−λ²)² = ε, by bisection on λ² ∈ [0, 1/3].
pub fn lambda_from_epsilon(eps: f64) -> Result<f64, SourceError> {
    if !(0.0..=MAX_EPSILON).contains(&eps) || eps.is_nan() {
        return Err(SourceError::NoRoot(eps));
    }
    let f = |x: f64| 2.0 * x * (1.0 - x) * (1.0 - x);
    let (mut lo, mut hi) = (0.0f64, 1.0 / 3.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-17 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).sqrt())
}

/// P(exactly one pair) for squeezing amplitude λ.
pub fn single_pair_probability(lambda: f64) -> f64 {
    let x = lambda * lambda;
    2.0 * x * (1.0 - x) * (1.0 - x)
}

/// Untruncated probability of exactly `n` pairs.
pub fn pair_number_probability(lambda: f64, n: u32) -> f64 {
    let x = lambda * lambda;
    f64::from(n + 1) * x.powi(n as i32) * (1.0 - x) * (1.0 - x)
}

/// A truncated, renormalized source state.
#[derive(Clone, Debug)]
pub struct SourceState {
    pub state: PureState,
    pub lambda: f64,
    /// Untruncated probability of more than `n_max` pairs.
    pub truncation_deficit: f64,
}

/// Truncated two-mode-squeezer pair on `p.spatial_pair`, all photons in
/// spectral bin 0 of a layout with `spectral_bins` bins.
pub fn spdc_pair(p: &SpdcParams, spectral_bins: usize) -> Result<SourceState, SourceError> {
    p.validate()?;
    let (a, b) = p.spatial_pair;
    let layout = Arc::new(ModeLayout::new(vec![a, b], spectral_bins)?);
    let eps = p.effective_epsilon();
    let lambda = if eps > 0.0 { lambda_from_epsilon(eps)? } else { 0.0 };
    let idx = |s: u32, pol: Pol| layout.index(OpticalMode::new(s, pol)).unwrap();
    // Partner polarization of b for an a-photon of polarization H / V.
    let (partner_h, partner_v, sign) = match p.state {
        PairState::PhiPlus => (Pol::H, Pol::V, 1.0f64),
        PairState::PhiMinus => (Pol::H, Pol::V, -1.0),
        PairState::PsiPlus => (Pol::V, Pol::H, 1.0),
        PairState::PsiMinus => (Pol::V, Pol::H, -1.0),
    };
    let mut amps = BTreeMap::new();
    let mut kept = 0.0;
    for n_h in 0..=p.n_max {
        for n_v in 0..=(p.n_max - n_h) {
            let n = u32::from(n_h + n_v);
            let mut occ = Occupation::zeros(layout.optical_count());
            occ.counts_mut()[idx(a, Pol::H)] += n_h;
            occ.counts_mut()[idx(b, partner_h)] += n_h;
            occ.counts_mut()[idx(a, Pol::V)] += n_v;
            occ.counts_mut()[idx(b, partner_v)] += n_v;
            let amp = lambda.powi(n as i32) * sign.powi(i32::from(n_v));
            kept += amp * amp;
            amps.insert(occ, Complex64::new(amp, 0.0));
        }
    }
    let scale = 1.0 / kept.sqrt();
    for v in amps.values_mut() {
        *v *= scale;
    }
    let x = lambda * lambda;
    let total_kept = kept * (1.0 - x) * (1.0 - x);
    Ok(SourceState {
        state: PureState::from_terms(layout, amps)?,
        lambda,
        truncation_deficit: (1.0 - total_kept).max(0.0),
    })
}

/// A pair source whose `herald` photon announces the other (`signal`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeraldedSingle {
    pub source: SpdcParams,
    pub herald: u32,
    pub signal: u32,
}

pub fn heralded_single(p: SpdcParams, herald: u32) -> Result<HeraldedSingle, SourceError> {
    p.validate()?;
    let (a, b) = p.spatial_pair;
    let signal = if herald == a {
        b
    } else if herald == b {
        a
    } else {
        return Err(SourceError::HeraldNotInPair { herald, a, b });
    };
    Ok(HeraldedSingle {
        source: p,
        herald,
        signal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{bell, reduce_to_qubits, StateEnsemble};

    #[test]
    fn lambda_small_epsilon_limit() {
        for eps in [1e-6, 1e-5, 1e-4] {
            let l = lambda_from_epsilon(eps).unwrap();
            let lead = (eps / 2.0).sqrt();
            assert!((l - lead).abs() / lead < 2.0 * eps);
        }
    }

    #[test]
    fn lambda_round_trip() {
        for eps in [0.001, 0.005, 0.02, 0.1, 0.2, 0.29] {
            let l = lambda_from_epsilon(eps).unwrap();
            assert!((single_pair_probability(l) - eps).abs() < 1e-10);
        }
        assert!(lambda_from_epsilon(0.3).is_err());
    }

    #[test]
    fn lambda_at_two_percent() {
        // independent bisection oracle (mpmath findroot, 30 digits)
        let l = lambda_from_epsilon(0.02).unwrap();
        assert!((l - 0.101_031_257_881_010_8).abs() < 1e-12, "{l}");
    }

    #[test]
    fn single_pair_term_is_phi_plus() {
        let p = SpdcParams { n_max: 1, ..SpdcParams::new(1, 2, 0.02) };
        let src = spdc_pair(&p, 1).unwrap();
        assert!((src.state.norm_sqr() - 1.0).abs() < 1e-12);
        assert_eq!(src.state.len(), 3);
        // drop vacuum and reduce
        let one_pair: Vec<_> = src
            .state
            .iter()
            .filter(|(o, _)| o.total() == 2)
            .map(|(o, a)| (o.clone(), *a))
            .collect();
        let st = PureState::from_terms(src.state.layout().clone(), one_pair).unwrap();
        let (_, rho) = reduce_to_qubits(&StateEnsemble::pure(st), (1, 2)).unwrap();
        assert!((rho.overlap(&bell::phi_plus()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bell_variants() {
        let expect = [
            (PairState::PhiPlus, bell::phi_plus()),
            (PairState::PhiMinus, bell::phi_minus()),
            (PairState::PsiPlus, bell::psi_plus()),
            (PairState::PsiMinus, bell::psi_minus()),
        ];
        for (ps, v) in expect {
            let p = SpdcParams { n_max: 1, state: ps, ..SpdcParams::new(3, 4, 0.02) };
            let src = spdc_pair(&p, 1).unwrap();
            let terms: Vec<_> = src
                .state
                .iter()
                .filter(|(o, _)| o.total() == 2)
                .map(|(o, a)| (o.clone(), *a))
                .collect();
            let st = PureState::from_terms(src.state.layout().clone(), terms).unwrap();
            let (_, rho) = reduce_to_qubits(&StateEnsemble::pure(st), (3, 4)).unwrap();
            assert!((rho.overlap(&v) - 1.0).abs() < 1e-12, "{ps:?}");
        }
    }

    #[test]
    fn pair_distribution_matches_closed_form() {
        let p = SpdcParams { n_max: 3, ..SpdcParams::new(1, 2, 0.05) };
        let src = spdc_pair(&p, 1).unwrap();
        let mut by_n = [0.0; 4];
        for (o, a) in src.state.iter() {
            by_n[(o.total() / 2) as usize] += a.norm_sqr();
        }
        let kept: f64 = (0..=3).map(|n| pair_number_probability(src.lambda, n)).sum();
        for n in 0..=3u32 {
            let want = pair_number_probability(src.lambda, n) / kept;
            assert!((by_n[n as usize] - want).abs() < 1e-10);
        }
        assert!((src.truncation_deficit - (1.0 - kept)).abs() < 1e-12);
    }

    #[test]
    fn truncation_deficit_is_third_order() {
        for eps in [0.005, 0.02, 0.05] {
            let src = spdc_pair(&SpdcParams::new(1, 2, eps), 1).unwrap();
            assert!(src.truncation_deficit < 10.0 * eps.powi(3));
        }
    }

    #[test]
    fn double_pair_ratio() {
        let eps = 0.02;
        let src = spdc_pair(&SpdcParams::new(1, 2, eps), 1).unwrap();
        let l2 = src.lambda * src.lambda;
        let ratio = pair_number_probability(src.lambda, 2) / pair_number_probability(src.lambda, 1);
        assert!((ratio - 1.5 * l2).abs() < 1e-15);
        // coefficient check: |2H,2H⟩ amplitude λ², |1H1V,1H1V⟩ amplitude λ²
        let st = &src.state;
        let vac = st.iter().find(|(o, _)| o.total() == 0).unwrap().1.re;
        for (o, a) in st.iter().filter(|(o, _)| o.total() == 4) {
            assert!((a.re / vac - l2).abs() < 1e-15, "{o:?}");
        }
        assert_eq!(st.iter().filter(|(o, _)| o.total() == 4).count(), 3);
    }

    #[test]
    fn gamma_scales_epsilon() {
        let p = SpdcParams { gamma: 0.5, ..SpdcParams::new(3, 4, 0.02) };
        let src = spdc_pair(&p, 1).unwrap();
        assert!((single_pair_probability(src.lambda) - 0.01).abs() < 1e-12);
        let vac = SpdcParams { gamma: 0.0, ..p };
        assert_eq!(spdc_pair(&vac, 1).unwrap().state.len(), 1);
    }

    #[test]
    fn parameter_validation() {
        assert!(SpdcParams::new(1, 2, 0.3).validate().is_err());
        assert!(SpdcParams::new(1, 1, 0.02).validate().is_err());
        assert!(SpdcParams { n_max: 4, ..SpdcParams::new(1, 2, 0.02) }.validate().is_err());
        assert!(heralded_single(SpdcParams::new(7, 8, 0.02), 9).is_err());
        assert_eq!(heralded_single(SpdcParams::new(7, 8, 0.02), 8).unwrap().signal, 7);
    }
}
