//! Threshold detectors, click-pattern statistics and seeded sampling.
//!
//! A detector with efficiency η and dark-count probability d reports no
//! click on `n` photons with probability `(1−d)(1−η)^n`, where `n` sums
//! over every optical mode it covers (both spectral bins, and both
//! polarizations unless it sits behind a polarizer).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use thiserror::Error;

use crate::fock::{
    Branch, FockError, ModeLayout, Occupation, OpticalMode, Pol, PureState, RecordEntry,
    RecordKind, StateEnsemble,
};

/// Largest number of detectors whose joint patterns may be enumerated.
pub const MAX_DETECTORS: usize = 20;

/// Shots drawn per Monte Carlo shard; shard `i` uses RNG stream `i`.
pub const SHARD_SHOTS: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("{0} detectors exceed the pattern enumeration limit of 2^20 patterns")]
    TooManyDetectors(usize),
    #[error("detector {label}: efficiency {value} outside [0, 1]")]
    BadEfficiency { label: String, value: f64 },
    #[error("detector {label}: dark-count probability {value} outside [0, 1]")]
    BadDark { label: String, value: f64 },
    #[error("detector label {0} used twice")]
    DuplicateLabel(String),
    #[error("detector {label} watches spatial mode {spatial}, which is not in the layout")]
    UnknownMode { label: String, spatial: u32 },
    #[error("optical mode {mode} is covered by detectors {first} and {second}")]
    OverlappingDetectors { mode: OpticalMode, first: String, second: String },
    #[error("unknown detector label {0}")]
    UnknownLabel(String),
    #[error("shot count must be at least 1")]
    NoShots,
    #[error("pattern distribution carries no probability")]
    EmptyDistribution,
    #[error(transparent)]
    Fock(#[from] FockError),
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Detector {
    pub label: String,
    pub spatial: u32,
    /// `None` for a polarization-blind detector on the whole spatial mode.
    pub pol: Option<Pol>,
    pub efficiency: f64,
    pub dark: f64,
}

impl Detector {
    pub fn new(spatial: u32, pol: Option<Pol>, efficiency: f64) -> Self {
        let label = match pol {
            Some(p) => format!("{spatial}{p}"),
            None => spatial.to_string(),
        };
        Detector {
            label,
            spatial,
            pol,
            efficiency,
            dark: 0.0,
        }
    }

    pub fn with_dark(self, dark: f64) -> Self {
        Detector { dark, ..self }
    }

    fn covers(&self, m: OpticalMode) -> bool {
        m.spatial == self.spatial && self.pol.is_none_or(|p| p == m.pol)
    }

    /// P(no click | n photons).
    pub fn no_click(&self, n: u32) -> f64 {
        (1.0 - self.dark) * (1.0 - self.efficiency).powi(n as i32)
    }
}

/// Ordered detector list; detector `i` owns bit `i` of a [`ClickPattern`].
#[derive(Clone, Debug, PartialEq, Default, serde::Serialize)]
pub struct DetectorConfig {
    detectors: Vec<Detector>,
}

impl DetectorConfig {
    pub fn new(detectors: Vec<Detector>) -> Result<Self, DetectionError> {
        if detectors.len() > MAX_DETECTORS {
            return Err(DetectionError::TooManyDetectors(detectors.len()));
        }
        for (i, d) in detectors.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.efficiency) {
                return Err(DetectionError::BadEfficiency {
                    label: d.label.clone(),
                    value: d.efficiency,
                });
            }
            if !(0.0..=1.0).contains(&d.dark) {
                return Err(DetectionError::BadDark {
                    label: d.label.clone(),
                    value: d.dark,
                });
            }
            if detectors[..i].iter().any(|o| o.label == d.label) {
                return Err(DetectionError::DuplicateLabel(d.label.clone()));
            }
            for o in &detectors[..i] {
                if o.spatial == d.spatial
                    && (o.pol.is_none() || d.pol.is_none() || o.pol == d.pol)
                {
                    let pol = d.pol.or(o.pol).unwrap_or(Pol::H);
                    return Err(DetectionError::OverlappingDetectors {
                        mode: OpticalMode::new(d.spatial, pol),
                        first: o.label.clone(),
                        second: d.label.clone(),
                    });
                }
            }
        }
        Ok(DetectorConfig { detectors })
    }

    pub fn detectors(&self) -> &[Detector] {
        &self.detectors
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.detectors.iter().position(|d| d.label == label)
    }

    /// Pattern with the named detectors lit.
    pub fn pattern(&self, labels: &[&str]) -> Result<ClickPattern, DetectionError> {
        let mut mask = 0;
        for l in labels {
            let i = self
                .position(l)
                .ok_or_else(|| DetectionError::UnknownLabel(l.to_string()))?;
            mask |= 1 << i;
        }
        Ok(ClickPattern(mask))
    }

    /// Detectors whose labels satisfy `keep`, in their original order.
    pub fn subset<F: Fn(&Detector) -> bool>(&self, keep: F) -> DetectorConfig {
        DetectorConfig {
            detectors: self.detectors.iter().filter(|d| keep(d)).cloned().collect(),
        }
    }

    /// Labels of the lit detectors, in detector order.
    pub fn labels(&self, p: ClickPattern) -> Vec<&str> {
        self.detectors
            .iter()
            .enumerate()
            .filter(|(i, _)| p.contains(*i))
            .map(|(_, d)| d.label.as_str())
            .collect()
    }

    /// Optical indices per detector.
    fn resolve(&self, layout: &ModeLayout) -> Result<Vec<Vec<usize>>, DetectionError> {
        self.detectors
            .iter()
            .map(|d| {
                if !layout.contains(d.spatial) {
                    return Err(DetectionError::UnknownMode {
                        label: d.label.clone(),
                        spatial: d.spatial,
                    });
                }
                Ok((0..layout.optical_count())
                    .filter(|&i| d.covers(layout.mode(i)))
                    .collect())
            })
            .collect()
    }
}

/// Set of detectors that fired, as a bitmask over detector positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ClickPattern(pub u32);

impl ClickPattern {
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }
}

impl fmt::Display for ClickPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

/// Outcome of a heralding measurement. `conditional` is `None` when the
/// pattern has zero probability.
#[derive(Clone, Debug)]
pub struct HeraldedState {
    pub pattern: ClickPattern,
    pub probability: f64,
    pub conditional: Option<StateEnsemble>,
}

/// One measured-occupation slice of an ensemble branch.
#[derive(Clone, Debug)]
struct Slice {
    /// Branch weight × norm² of this slice.
    probability: f64,
    /// Photons seen by each detector.
    counts: Vec<u32>,
    /// Unnormalized state with measured modes emptied.
    state: Arc<PureState>,
    weight: f64,
    record: Vec<RecordEntry>,
    merged: usize,
}

/// An ensemble decomposed by what the detectors will see. Build once and
/// query many patterns.
#[derive(Clone, Debug)]
pub struct MeasuredEnsemble {
    layout: Arc<ModeLayout>,
    config: DetectorConfig,
    slices: Vec<Slice>,
}

impl MeasuredEnsemble {
    pub fn new(ens: &StateEnsemble, config: &DetectorConfig) -> Result<Self, DetectionError> {
        let layout = ens.layout().clone();
        let cover = config.resolve(&layout)?;
        let measured: Vec<usize> = cover.iter().flatten().copied().collect();
        let slices = ens
            .branches()
            .par_iter()
            .flat_map_iter(|b| split_branch(b, &layout, &cover, &measured))
            .collect();
        Ok(MeasuredEnsemble {
            layout,
            config: config.clone(),
            slices,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Probability of every pattern with nonzero weight, sorted by pattern.
    pub fn pattern_distribution(&self) -> Vec<(ClickPattern, f64)> {
        let mut acc: BTreeMap<ClickPattern, f64> = BTreeMap::new();
        for s in &self.slices {
            for_each_pattern(&self.config, &s.counts, |p, q| {
                *acc.entry(p).or_default() += s.probability * q;
            });
        }
        acc.into_iter().filter(|(_, p)| *p > 0.0).collect()
    }

    /// Exact pattern (every detector specified).
    pub fn herald(&self, pattern: ClickPattern) -> HeraldedState {
        let all = (1u32 << self.config.len()) - 1;
        self.herald_partial(pattern, ClickPattern(all & !pattern.0))
    }

    /// Detectors in `clicks` fired and those in `silent` did not; the rest
    /// are marginalized.
    pub fn herald_partial(&self, clicks: ClickPattern, silent: ClickPattern) -> HeraldedState {
        let mut branches = Vec::new();
        let mut total = 0.0;
        for s in &self.slices {
            let q = self.partial_likelihood(&s.counts, clicks, silent);
            if q <= 0.0 {
                continue;
            }
            total += s.probability * q;
            branches.push(Branch {
                weight: s.weight * q,
                state: s.state.clone(),
                record: s.record.clone(),
                merged: s.merged,
            });
        }
        let conditional = if total > 0.0 {
            for b in &mut branches {
                b.weight /= total;
            }
            Some(StateEnsemble::from_branches(self.layout.clone(), branches).coalesce())
        } else {
            None
        };
        HeraldedState {
            pattern: clicks,
            probability: total,
            conditional,
        }
    }

    fn partial_likelihood(&self, counts: &[u32], clicks: ClickPattern, silent: ClickPattern) -> f64 {
        let mut q = 1.0;
        for (i, d) in self.config.detectors.iter().enumerate() {
            let off = d.no_click(counts[i]);
            if clicks.contains(i) {
                q *= 1.0 - off;
            } else if silent.contains(i) {
                q *= off;
            }
            if q == 0.0 {
                break;
            }
        }
        q
    }
}

fn split_branch(
    b: &Branch,
    layout: &Arc<ModeLayout>,
    cover: &[Vec<usize>],
    measured: &[usize],
) -> Vec<Slice> {
    let mut groups: BTreeMap<Vec<u8>, BTreeMap<Occupation, num_complex::Complex64>> =
        BTreeMap::new();
    for (occ, amp) in b.state.iter() {
        let key: Vec<u8> = measured.iter().map(|&i| occ.get(i)).collect();
        let mut rest = occ.clone();
        for &i in measured {
            rest.counts_mut()[i] = 0;
        }
        groups.entry(key).or_default().insert(rest, *amp);
    }
    groups
        .into_iter()
        .map(|(key, amps)| {
            let state = PureState::from_map(layout.clone(), amps, b.state.discarded());
            let mut counts = Vec::with_capacity(cover.len());
            let mut pos = 0;
            for c in cover {
                counts.push(key[pos..pos + c.len()].iter().map(|&n| u32::from(n)).sum());
                pos += c.len();
            }
            let mut record = b.record.clone();
            for (slot, &n) in key.iter().enumerate() {
                if n > 0 {
                    record.push(RecordEntry {
                        kind: RecordKind::Detected,
                        mode: measured[slot],
                        count: n,
                    });
                }
            }
            Slice {
                probability: b.weight * state.norm_sqr(),
                counts,
                state: Arc::new(state),
                weight: b.weight,
                record,
                merged: b.merged,
            }
        })
        .collect()
}

/// Calls `f(pattern, P(pattern | counts))` for every pattern of nonzero
/// likelihood. Only detectors that can fire are enumerated.
fn for_each_pattern<F: FnMut(ClickPattern, f64)>(config: &DetectorConfig, counts: &[u32], mut f: F) {
    let free: Vec<(usize, f64)> = config
        .detectors
        .iter()
        .enumerate()
        .map(|(i, d)| (i, d.no_click(counts[i])))
        .filter(|&(_, off)| off < 1.0)
        .collect();
    let k = free.len();
    for sub in 0u32..(1 << k) {
        let mut q = 1.0;
        let mut mask = 0u32;
        for (j, &(i, off)) in free.iter().enumerate() {
            if sub >> j & 1 == 1 {
                q *= 1.0 - off;
                mask |= 1 << i;
            } else {
                q *= off;
            }
        }
        if q > 0.0 {
            f(ClickPattern(mask), q);
        }
    }
}

/// All patterns with their conditional states.
pub fn click_distribution(
    ens: &StateEnsemble,
    det: &DetectorConfig,
) -> Result<Vec<HeraldedState>, DetectionError> {
    let m = MeasuredEnsemble::new(ens, det)?;
    Ok(m
        .pattern_distribution()
        .into_iter()
        .map(|(p, _)| m.herald(p))
        .collect())
}

pub fn herald(
    ens: &StateEnsemble,
    det: &DetectorConfig,
    pattern: ClickPattern,
) -> Result<HeraldedState, DetectionError> {
    Ok(MeasuredEnsemble::new(ens, det)?.herald(pattern))
}

/// Draws `shots` outcomes from `weights` (need not be normalized) and
/// returns the count per index. Deterministic given `seed`: shard `i`
/// uses a ChaCha8 generator seeded with `seed` on stream `i`.
pub fn sample_histogram(weights: &[f64], shots: u64, seed: u64) -> Result<Vec<u64>, DetectionError> {
    if shots == 0 {
        return Err(DetectionError::NoShots);
    }
    let alias = WeightedAliasIndex::new(weights.to_vec())
        .map_err(|_| DetectionError::EmptyDistribution)?;
    let shards = shots.div_ceil(SHARD_SHOTS);
    let n = weights.len();
    let counts = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let this = SHARD_SHOTS.min(shots - shard * SHARD_SHOTS);
            let mut c = vec![0u64; n];
            for _ in 0..this {
                c[alias.sample(&mut rng)] += 1;
            }
            c
        })
        .reduce(
            || vec![0u64; n],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(counts)
}

/// Event counts per coincidence class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize)]
pub struct CoincidenceCounts {
    pub c4: u64,
    pub c5: u64,
    pub c6: u64,
    pub c8: u64,
    pub shots: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct CountRecord {
    pub class: String,
    pub count: u64,
    pub shots: u64,
    pub seed: u64,
}

impl CoincidenceCounts {
    pub fn records(&self) -> Vec<CountRecord> {
        [("c4", self.c4), ("c5", self.c5), ("c6", self.c6), ("c8", self.c8)]
            .into_iter()
            .map(|(class, count)| CountRecord {
                class: class.to_string(),
                count,
                shots: self.shots,
                seed: self.seed,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn layout(labels: &[u32], bins: usize) -> Arc<ModeLayout> {
        Arc::new(ModeLayout::new(labels.to_vec(), bins).unwrap())
    }

    fn fock(l: &Arc<ModeLayout>, counts: &[(OpticalMode, u8)]) -> PureState {
        let mut occ = Occupation::zeros(l.optical_count());
        for (m, n) in counts {
            occ.counts_mut()[l.index(*m).unwrap()] += n;
        }
        PureState::from_terms(l.clone(), [(occ, Complex64::new(1.0, 0.0))]).unwrap()
    }

    fn h(s: u32) -> OpticalMode {
        OpticalMode::new(s, Pol::H)
    }

    #[test]
    fn two_photons_threshold_povm() {
        let l = layout(&[1], 1);
        let ens = StateEnsemble::pure(fock(&l, &[(h(1), 2)]));
        let det = DetectorConfig::new(vec![Detector::new(1, None, 0.75)]).unwrap();
        let dist = MeasuredEnsemble::new(&ens, &det).unwrap().pattern_distribution();
        assert_eq!(dist.len(), 2);
        assert!((dist[0].1 - 0.0625).abs() < 1e-15);
        assert!((dist[1].1 - 0.9375).abs() < 1e-15);
    }

    #[test]
    fn vacuum_only_empty_pattern() {
        let l = layout(&[1, 2], 1);
        let ens = StateEnsemble::pure(PureState::vacuum(l));
        let det = DetectorConfig::new(vec![
            Detector::new(1, None, 0.9),
            Detector::new(2, Some(Pol::H), 0.9),
        ])
        .unwrap();
        let dist = click_distribution(&ens, &det).unwrap();
        assert_eq!(dist.len(), 1);
        assert_eq!(dist[0].pattern, ClickPattern(0));
        assert_eq!(dist[0].probability, 1.0);
    }

    #[test]
    fn dark_counts_light_vacuum() {
        let l = layout(&[1], 1);
        let ens = StateEnsemble::pure(PureState::vacuum(l));
        let det = DetectorConfig::new(vec![Detector::new(1, None, 0.9).with_dark(0.1)]).unwrap();
        let dist = MeasuredEnsemble::new(&ens, &det).unwrap().pattern_distribution();
        assert!((dist[1].1 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn impossible_pattern_has_empty_result() {
        let l = layout(&[1, 2, 3], 1);
        let ens = StateEnsemble::pure(fock(&l, &[(h(1), 1), (h(2), 1)]));
        let det = DetectorConfig::new(vec![
            Detector::new(1, None, 1.0),
            Detector::new(2, None, 1.0),
            Detector::new(3, None, 1.0),
        ])
        .unwrap();
        let r = herald(&ens, &det, ClickPattern(0b111)).unwrap();
        assert_eq!(r.probability, 0.0);
        assert!(r.conditional.is_none());
    }

    #[test]
    fn conditional_is_normalized_and_measured_modes_empty() {
        let l = layout(&[1, 2], 1);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = fock(&l, &[(h(1), 1), (h(2), 1)]);
        let b = fock(&l, &[(h(2), 1)]);
        let st = PureState::from_terms(
            l.clone(),
            a.iter()
                .chain(b.iter())
                .map(|(o, _)| (o.clone(), Complex64::new(s, 0.0))),
        )
        .unwrap();
        let det = DetectorConfig::new(vec![Detector::new(1, None, 0.5)]).unwrap();
        for hs in click_distribution(&StateEnsemble::pure(st), &det).unwrap() {
            let c = hs.conditional.unwrap();
            assert!((c.total_probability() - 1.0).abs() < 1e-12);
            for br in c.branches() {
                for (o, _) in br.state.iter() {
                    assert_eq!(o.get(0) + o.get(1), 0);
                }
            }
        }
    }

    #[test]
    fn spectral_bins_are_summed() {
        let l = layout(&[1], 2);
        let ens = StateEnsemble::pure(fock(&l, &[(h(1), 1), (h(1).with_bin(1), 1)]));
        let det = DetectorConfig::new(vec![Detector::new(1, Some(Pol::H), 0.5)]).unwrap();
        let dist = MeasuredEnsemble::new(&ens, &det).unwrap().pattern_distribution();
        assert!((dist[0].1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::new(vec![Detector::new(1, None, 1.2)]).is_err());
        assert!(DetectorConfig::new(vec![
            Detector::new(1, None, 0.5),
            Detector::new(1, Some(Pol::V), 0.5)
        ])
        .is_err());
        assert!(DetectorConfig::new(vec![
            Detector::new(1, Some(Pol::H), 0.5),
            Detector::new(1, Some(Pol::V), 0.5)
        ])
        .is_ok());
        let many = (1..=21).map(|s| Detector::new(s, None, 1.0)).collect();
        assert!(matches!(
            DetectorConfig::new(many),
            Err(DetectionError::TooManyDetectors(21))
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let w = [0.5, 0.25, 0.25];
        let a = sample_histogram(&w, 3_000_000, 7).unwrap();
        let b = sample_histogram(&w, 3_000_000, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().sum::<u64>(), 3_000_000);
        assert_ne!(a, sample_histogram(&w, 3_000_000, 8).unwrap());
        assert!(sample_histogram(&w, 0, 7).is_err());
    }
}
