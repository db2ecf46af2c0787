//! Multi-mode bosonic states in the Fock basis.
//!
//! Optical modes are indexed canonically: spatial label ascending, then `H`
//! before `V`, then spectral bin 0 before bin 1. A [`PureState`] is a sparse
//! map from occupation vectors to amplitudes; mixed states are carried as a
//! [`StateEnsemble`] of weighted pure branches, each tagged with the loss or
//! measurement record that produced it.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use thiserror::Error;

/// Amplitudes with modulus below this are dropped after every operation.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// Largest total probability a single pruning pass may discard.
pub const MAX_PRUNED_PROBABILITY: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("spatial mode label {0} appears more than once")]
    DuplicateSpatial(u32),
    #[error("spatial labels must be positive, got {0}")]
    ZeroSpatial(u32),
    #[error("spectral bin count must be 1 or 2, got {0}")]
    BadSpectralBins(usize),
    #[error("layouts overlap on spatial mode {0}")]
    OverlappingLayouts(u32),
    #[error("layouts disagree on spectral bins ({0} vs {1})")]
    SpectralMismatch(usize, usize),
    #[error("occupation has {got} entries but the layout has {expected} optical modes")]
    OccupationLength { expected: usize, got: usize },
    #[error("spatial mode {0} is not part of the layout")]
    UnknownSpatial(u32),
    #[error("ensemble carries photons outside spatial modes {0} and {1}")]
    PhotonsOutsidePair(u32, u32),
    #[error("two-photon sector is empty; density matrix undefined (a0={a0}, a1={a1}, overflow={overflow})")]
    EmptyTwoPhotonSector { a0: f64, a1: f64, overflow: f64 },
    #[error("ensemble carries no probability")]
    EmptyEnsemble,
    #[error("matrix is not a valid density matrix: {0}")]
    InvalidDensityMatrix(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Pol {
    H,
    V,
}

impl Pol {
    pub fn index(self) -> usize {
        match self {
            Pol::H => 0,
            Pol::V => 1,
        }
    }

    pub fn from_index(i: usize) -> Pol {
        if i == 0 {
            Pol::H
        } else {
            Pol::V
        }
    }
}

impl fmt::Display for Pol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pol::H => "H",
            Pol::V => "V",
        })
    }
}

/// One optical mode: spatial label, polarization and spectral bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpticalMode {
    pub spatial: u32,
    pub pol: Pol,
    pub bin: u8,
}

impl OpticalMode {
    pub fn new(spatial: u32, pol: Pol) -> Self {
        OpticalMode { spatial, pol, bin: 0 }
    }

    pub fn with_bin(self, bin: u8) -> Self {
        OpticalMode { bin, ..self }
    }
}

impl fmt::Display for OpticalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.spatial, self.pol)?;
        if self.bin > 0 {
            write!(f, "'{}", self.bin)?;
        }
        Ok(())
    }
}

/// Spatial modes × {H, V} × spectral bins.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModeLayout {
    spatial: Vec<u32>,
    spectral_bins: usize,
}

impl ModeLayout {
    /// Labels are sorted into canonical ascending order.
    pub fn new(mut spatial: Vec<u32>, spectral_bins: usize) -> Result<Self, FockError> {
        if spectral_bins != 1 && spectral_bins != 2 {
            return Err(FockError::BadSpectralBins(spectral_bins));
        }
        spatial.sort_unstable();
        for w in spatial.windows(2) {
            if w[0] == w[1] {
                return Err(FockError::DuplicateSpatial(w[0]));
            }
        }
        if let Some(&0) = spatial.first() {
            return Err(FockError::ZeroSpatial(0));
        }
        Ok(ModeLayout {
            spatial,
            spectral_bins,
        })
    }

    /// Spatial modes `1..=count`.
    pub fn numbered(count: u32, spectral_bins: usize) -> Result<Self, FockError> {
        Self::new((1..=count).collect(), spectral_bins)
    }

    pub fn spatial(&self) -> &[u32] {
        &self.spatial
    }

    pub fn spectral_bins(&self) -> usize {
        self.spectral_bins
    }

    pub fn optical_count(&self) -> usize {
        self.spatial.len() * 2 * self.spectral_bins
    }

    pub fn contains(&self, spatial: u32) -> bool {
        self.spatial.binary_search(&spatial).is_ok()
    }

    pub fn index(&self, mode: OpticalMode) -> Option<usize> {
        let pos = self.spatial.binary_search(&mode.spatial).ok()?;
        if usize::from(mode.bin) >= self.spectral_bins {
            return None;
        }
        Some((pos * 2 + mode.pol.index()) * self.spectral_bins + usize::from(mode.bin))
    }

    pub fn mode(&self, index: usize) -> OpticalMode {
        let bin = index % self.spectral_bins;
        let rest = index / self.spectral_bins;
        OpticalMode {
            spatial: self.spatial[rest / 2],
            pol: Pol::from_index(rest % 2),
            bin: bin as u8,
        }
    }

    /// All optical indices belonging to one spatial mode.
    pub fn spatial_indices(&self, spatial: u32) -> Result<std::ops::Range<usize>, FockError> {
        let pos = self
            .spatial
            .binary_search(&spatial)
            .map_err(|_| FockError::UnknownSpatial(spatial))?;
        let width = 2 * self.spectral_bins;
        Ok(pos * width..(pos + 1) * width)
    }

    pub fn with_spectral_bins(&self, bins: usize) -> Result<Self, FockError> {
        Self::new(self.spatial.clone(), bins)
    }

    /// Disjoint union of two layouts.
    pub fn join(&self, other: &ModeLayout) -> Result<Self, FockError> {
        if self.spectral_bins != other.spectral_bins {
            return Err(FockError::SpectralMismatch(
                self.spectral_bins,
                other.spectral_bins,
            ));
        }
        if let Some(&s) = self.spatial.iter().find(|s| other.contains(**s)) {
            return Err(FockError::OverlappingLayouts(s));
        }
        let mut all = self.spatial.clone();
        all.extend_from_slice(&other.spatial);
        Self::new(all, self.spectral_bins)
    }
}

/// Photon count per optical mode, in the layout's canonical order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupation(Box<[u8]>);

impl Occupation {
    pub fn zeros(len: usize) -> Self {
        Occupation(vec![0; len].into_boxed_slice())
    }

    pub fn from_counts(counts: Vec<u8>) -> Self {
        Occupation(counts.into_boxed_slice())
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }

    pub fn counts_mut(&mut self) -> &mut [u8] {
        &mut self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| u32::from(n)).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> u8 {
        self.0[index]
    }
}

impl fmt::Debug for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "⟩")
    }
}

/// Sparse superposition of Fock basis states. May be sub-normalized.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    layout: Arc<ModeLayout>,
    amplitudes: BTreeMap<Occupation, Complex64>,
    discarded: f64,
}

impl PureState {
    pub fn vacuum(layout: Arc<ModeLayout>) -> Self {
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(
            Occupation::zeros(layout.optical_count()),
            Complex64::new(1.0, 0.0),
        );
        PureState {
            layout,
            amplitudes,
            discarded: 0.0,
        }
    }

    pub fn empty(layout: Arc<ModeLayout>) -> Self {
        PureState {
            layout,
            amplitudes: BTreeMap::new(),
            discarded: 0.0,
        }
    }

    /// Builds a state from explicit terms; duplicate occupations add.
    pub fn from_terms<I>(layout: Arc<ModeLayout>, terms: I) -> Result<Self, FockError>
    where
        I: IntoIterator<Item = (Occupation, Complex64)>,
    {
        let mut state = PureState::empty(layout);
        for (occ, amp) in terms {
            if occ.len() != state.layout.optical_count() {
                return Err(FockError::OccupationLength {
                    expected: state.layout.optical_count(),
                    got: occ.len(),
                });
            }
            *state.amplitudes.entry(occ).or_default() += amp;
        }
        state.prune();
        Ok(state)
    }

    /// Builds from an already-accumulated map, pruning small entries.
    pub(crate) fn from_map(
        layout: Arc<ModeLayout>,
        amplitudes: BTreeMap<Occupation, Complex64>,
        discarded: f64,
    ) -> Self {
        let mut s = PureState {
            layout,
            amplitudes,
            discarded,
        };
        s.prune();
        s
    }

    pub fn layout(&self) -> &Arc<ModeLayout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.amplitudes.iter()
    }

    pub fn amplitude(&self, occ: &Occupation) -> Complex64 {
        self.amplitudes.get(occ).copied().unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    /// Probability dropped by pruning over this state's history.
    pub fn discarded(&self) -> f64 {
        self.discarded
    }

    pub fn max_photons(&self) -> u32 {
        self.amplitudes.keys().map(Occupation::total).max().unwrap_or(0)
    }

    pub fn scaled(&self, factor: Complex64) -> PureState {
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(k, v)| (k.clone(), v * factor))
            .collect();
        PureState::from_map(self.layout.clone(), amplitudes, self.discarded)
    }

    /// Returns the state rescaled to unit norm, or `None` when it is empty.
    pub fn normalized(&self) -> Option<PureState> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return None;
        }
        Some(self.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)))
    }

    fn prune(&mut self) {
        let mut dropped = 0.0;
        self.amplitudes.retain(|_, a| {
            if a.norm() < PRUNE_THRESHOLD {
                dropped += a.norm_sqr();
                false
            } else {
                true
            }
        });
        debug_assert!(dropped <= MAX_PRUNED_PROBABILITY, "pruned {dropped}");
        self.discarded += dropped;
    }

    /// Tensor product with a state on a disjoint set of spatial modes.
    pub fn tensor(&self, other: &PureState) -> Result<PureState, FockError> {
        let joint = Arc::new(self.layout.join(&other.layout)?);
        let map_a = embedding(&self.layout, &joint);
        let map_b = embedding(&other.layout, &joint);
        let mut amplitudes = BTreeMap::new();
        for (oa, aa) in &self.amplitudes {
            for (ob, ab) in &other.amplitudes {
                let mut occ = Occupation::zeros(joint.optical_count());
                for (i, &n) in oa.counts().iter().enumerate() {
                    occ.0[map_a[i]] = n;
                }
                for (i, &n) in ob.counts().iter().enumerate() {
                    occ.0[map_b[i]] = n;
                }
                amplitudes.insert(occ, aa * ab);
            }
        }
        Ok(PureState::from_map(
            joint,
            amplitudes,
            self.discarded + other.discarded,
        ))
    }

    /// Product with a state on the same layout whose photons sit in modes
    /// this state leaves empty; occupations add.
    pub fn product_disjoint(&self, other: &PureState) -> Result<PureState, FockError> {
        if *self.layout != *other.layout {
            return Err(FockError::SpectralMismatch(
                self.layout.spectral_bins(),
                other.layout.spectral_bins(),
            ));
        }
        let mut amplitudes = BTreeMap::new();
        for (oa, aa) in &self.amplitudes {
            for (ob, ab) in &other.amplitudes {
                let mut occ = oa.clone();
                for (i, &n) in ob.counts().iter().enumerate() {
                    if n > 0 {
                        debug_assert_eq!(occ.0[i], 0, "supports overlap");
                        occ.0[i] += n;
                    }
                }
                *amplitudes.entry(occ).or_default() += aa * ab;
            }
        }
        Ok(PureState::from_map(
            self.layout.clone(),
            amplitudes,
            self.discarded + other.discarded,
        ))
    }

    /// Re-expresses the state on a larger layout (extra modes in vacuum).
    pub fn embed(&self, target: &Arc<ModeLayout>) -> Result<PureState, FockError> {
        if target.spectral_bins() != self.layout.spectral_bins() {
            return Err(FockError::SpectralMismatch(
                self.layout.spectral_bins(),
                target.spectral_bins(),
            ));
        }
        for &s in self.layout.spatial() {
            if !target.contains(s) {
                return Err(FockError::UnknownSpatial(s));
            }
        }
        let map = embedding(&self.layout, target);
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(occ, a)| {
                let mut out = Occupation::zeros(target.optical_count());
                for (i, &n) in occ.counts().iter().enumerate() {
                    out.0[map[i]] = n;
                }
                (out, *a)
            })
            .collect();
        Ok(PureState {
            layout: target.clone(),
            amplitudes,
            discarded: self.discarded,
        })
    }

    /// Inner product ⟨self|other⟩.
    pub fn inner(&self, other: &PureState) -> Complex64 {
        self.amplitudes
            .iter()
            .map(|(k, a)| a.conj() * other.amplitude(k))
            .sum()
    }

    /// Debug text: one `⟨occupation⟩: re, im` line per term, canonical order.
    pub fn to_debug_text(&self) -> String {
        let mut out = String::new();
        for (occ, a) in &self.amplitudes {
            out.push_str(&format!("{occ:?}: {:e}, {:e}\n", a.re, a.im));
        }
        out
    }
}

fn embedding(from: &ModeLayout, to: &ModeLayout) -> Vec<usize> {
    (0..from.optical_count())
        .map(|i| to.index(from.mode(i)).expect("embedding target contains mode"))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RecordKind {
    Lost,
    Detected,
}

/// One entry of a branch's provenance: `count` photons lost or detected in
/// optical mode `mode`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordEntry {
    pub kind: RecordKind,
    pub mode: usize,
    pub count: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub weight: f64,
    pub state: Arc<PureState>,
    pub record: Vec<RecordEntry>,
    /// Number of records folded into this branch by coalescing.
    pub merged: usize,
}

impl Branch {
    pub fn probability(&self) -> f64 {
        self.weight * self.state.norm_sqr()
    }
}

/// Classical mixture of pure states on a shared layout.
#[derive(Clone, Debug, PartialEq)]
pub struct StateEnsemble {
    layout: Arc<ModeLayout>,
    branches: Vec<Branch>,
}

impl StateEnsemble {
    pub fn pure(state: PureState) -> Self {
        StateEnsemble {
            layout: state.layout.clone(),
            branches: vec![Branch {
                weight: 1.0,
                state: Arc::new(state),
                record: Vec::new(),
                merged: 1,
            }],
        }
    }

    pub fn from_branches(layout: Arc<ModeLayout>, branches: Vec<Branch>) -> Self {
        debug_assert!(branches.iter().all(|b| *b.state.layout == *layout));
        StateEnsemble { layout, branches }
    }

    pub fn layout(&self) -> &Arc<ModeLayout> {
        &self.layout
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn into_branches(self) -> Vec<Branch> {
        self.branches
    }

    pub fn total_probability(&self) -> f64 {
        self.branches.iter().map(Branch::probability).sum()
    }

    pub fn discarded(&self) -> f64 {
        self.branches.iter().map(|b| b.weight * b.state.discarded()).sum()
    }

    /// Rescales weights so the total probability is one.
    pub fn normalized(&self) -> Result<StateEnsemble, FockError> {
        let total = self.total_probability();
        if total <= 0.0 {
            return Err(FockError::EmptyEnsemble);
        }
        let branches = self
            .branches
            .iter()
            .map(|b| Branch {
                weight: b.weight / total,
                ..b.clone()
            })
            .collect();
        Ok(StateEnsemble {
            layout: self.layout.clone(),
            branches,
        })
    }

    /// Applies `f` to every branch state, keeping weights and records.
    pub fn map_states<F, E>(&self, f: F) -> Result<StateEnsemble, E>
    where
        F: Fn(&PureState) -> Result<PureState, E> + Sync,
        E: Send,
    {
        use rayon::prelude::*;
        let branches = self
            .branches
            .par_iter()
            .map(|b| {
                Ok(Branch {
                    weight: b.weight,
                    state: Arc::new(f(&b.state)?),
                    record: b.record.clone(),
                    merged: b.merged,
                })
            })
            .collect::<Result<Vec<_>, E>>()?;
        Ok(StateEnsemble {
            layout: self.layout.clone(),
            branches,
        })
    }

    /// Merges branches whose normalized states coincide, summing their
    /// probabilities. Empty branches are dropped.
    pub fn coalesce(self) -> StateEnsemble {
        let layout = self.layout;
        let mut groups: BTreeMap<Vec<Occupation>, Vec<Branch>> = BTreeMap::new();
        for b in self.branches {
            if b.state.is_empty() || b.weight <= 0.0 {
                continue;
            }
            let support: Vec<Occupation> = b.state.amplitudes.keys().cloned().collect();
            groups.entry(support).or_default().push(b);
        }
        let mut out: Vec<Branch> = Vec::new();
        for (_, group) in groups {
            let mut merged: Vec<(Branch, PureState)> = Vec::new();
            for b in group {
                let unit = b.state.normalized().expect("non-empty state");
                if let Some((acc, _)) = merged.iter_mut().find(|(_, u)| same_ray(u, &unit)) {
                    // Keep the representative state; fold the probability in.
                    let rep_norm = acc.state.norm_sqr();
                    acc.weight += b.probability() / rep_norm;
                    acc.merged += b.merged;
                    if b.record < acc.record {
                        acc.record = b.record.clone();
                    }
                } else {
                    merged.push((b, unit));
                }
            }
            out.extend(merged.into_iter().map(|(b, _)| b));
        }
        StateEnsemble {
            layout,
            branches: out,
        }
    }

    /// Replaces the branches by the eigen-decomposition of the ensemble's
    /// density matrix: the same state with at most as many branches as
    /// the support has occupations. Records are dropped. Ensembles whose
    /// support exceeds `max_dim` come back unchanged.
    pub fn compress(self, max_dim: usize) -> StateEnsemble {
        let mut index: BTreeMap<&Occupation, usize> = BTreeMap::new();
        for b in &self.branches {
            for occ in b.state.amplitudes.keys() {
                let next = index.len();
                index.entry(occ).or_insert(next);
            }
        }
        let d = index.len();
        if d == 0 || d > max_dim || d >= self.branches.len() {
            return self;
        }
        let mut rho = nalgebra::DMatrix::<Complex64>::zeros(d, d);
        let mut discarded = 0.0;
        let mut merged = 0;
        for b in &self.branches {
            let v: Vec<(usize, Complex64)> = b.state.amplitudes.iter().map(|(o, a)| (index[o], *a)).collect();
            for &(i, ai) in &v {
                for &(j, aj) in &v {
                    rho[(i, j)] += ai * aj.conj() * b.weight;
                }
            }
            discarded += b.weight * b.state.discarded;
            merged += b.merged;
        }
        let occs: Vec<Occupation> = {
            let mut o = vec![Occupation::zeros(0); d];
            for (occ, &i) in &index {
                o[i] = (*occ).clone();
            }
            o
        };
        let eig = nalgebra::SymmetricEigen::new(rho);
        let total: f64 = eig.eigenvalues.iter().filter(|l| **l > 0.0).sum();
        let mut branches = Vec::new();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= total * PRUNE_THRESHOLD {
                discarded += lambda.max(0.0);
                continue;
            }
            let col = eig.eigenvectors.column(k);
            let amps = occs.iter().cloned().zip(col.iter().copied()).collect();
            branches.push(Branch {
                weight: lambda,
                state: Arc::new(PureState::from_map(self.layout.clone(), amps, 0.0)),
                record: Vec::new(),
                merged,
            });
        }
        if let Some(first) = branches.first_mut() {
            Arc::make_mut(&mut first.state).discarded += discarded / first.weight;
        }
        StateEnsemble {
            layout: self.layout,
            branches,
        }
    }

    /// Total photon count distribution per listed spatial mode, summed over
    /// polarization and spectral bins.
    pub fn photons_in(&self, occ: &Occupation, spatial: u32) -> u32 {
        self.layout
            .spatial_indices(spatial)
            .map(|r| r.map(|i| u32::from(occ.get(i))).sum())
            .unwrap_or(0)
    }
}

/// Equal up to a global phase, entrywise within 1e-12.
fn same_ray(a: &PureState, b: &PureState) -> bool {
    if a.amplitudes.len() != b.amplitudes.len() {
        return false;
    }
    let overlap = a.inner(b);
    if (overlap.norm() - 1.0).abs() > 1e-12 {
        return false;
    }
    let phase = overlap / overlap.norm();
    a.amplitudes
        .iter()
        .all(|(k, v)| (v * phase - b.amplitude(k)).norm() <= 1e-12)
}

/// Two-qubit density matrix in the basis {HH, HV, VH, VV}.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitDensityMatrix(Matrix4<Complex64>);

impl QubitDensityMatrix {
    /// Validates hermiticity, unit trace and positivity.
    pub fn new(m: Matrix4<Complex64>) -> Result<Self, FockError> {
        let herm = (m - m.adjoint()).norm();
        if herm > 1e-10 {
            return Err(FockError::InvalidDensityMatrix(format!(
                "not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(FockError::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let rho = QubitDensityMatrix(m);
        let min = rho.min_eigenvalue();
        if min < -1e-9 {
            return Err(FockError::InvalidDensityMatrix(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        Ok(rho)
    }

    pub fn from_pure(v: &Vector4<Complex64>) -> Self {
        let v = v / Complex64::new(v.norm(), 0.0);
        QubitDensityMatrix(v * v.adjoint())
    }

    pub fn maximally_mixed() -> Self {
        QubitDensityMatrix(Matrix4::identity() * Complex64::new(0.25, 0.0))
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        herm.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// ⟨ψ|ρ|ψ⟩ for a (normalized) two-qubit vector.
    pub fn overlap(&self, psi: &Vector4<Complex64>) -> f64 {
        (psi.adjoint() * self.0 * psi)[(0, 0)].re
    }

    /// Tr(ρ·O) for a 4×4 observable.
    pub fn expectation(&self, op: &Matrix4<Complex64>) -> f64 {
        (self.0 * op).trace().re
    }
}

/// Bell basis vectors in {HH, HV, VH, VV} order.
pub mod bell {
    use nalgebra::Vector4;
    use num_complex::Complex64;

    fn v(a: f64, b: f64, c: f64, d: f64) -> Vector4<Complex64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Vector4::new(
            Complex64::new(a * s, 0.0),
            Complex64::new(b * s, 0.0),
            Complex64::new(c * s, 0.0),
            Complex64::new(d * s, 0.0),
        )
    }

    pub fn phi_plus() -> Vector4<Complex64> {
        v(1.0, 0.0, 0.0, 1.0)
    }
    pub fn phi_minus() -> Vector4<Complex64> {
        v(1.0, 0.0, 0.0, -1.0)
    }
    pub fn psi_plus() -> Vector4<Complex64> {
        v(0.0, 1.0, 1.0, 0.0)
    }
    pub fn psi_minus() -> Vector4<Complex64> {
        v(0.0, 1.0, -1.0, 0.0)
    }
}

/// Heralded-sector probabilities for a pair of spatial modes.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct FockSectorWeights {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
}

/// Result of projecting an ensemble onto the dual-rail two-qubit sector.
#[derive(Clone, Debug, PartialEq)]
pub struct QubitReduction {
    pub sectors: FockSectorWeights,
    /// Mass with two or more photons in one of the two spatial modes.
    pub overflow: f64,
    /// Total probability of the (unnormalized) input ensemble.
    pub total: f64,
    /// Unnormalized two-photon block (trace = `a2 * total`).
    pub(crate) block: Matrix4<Complex64>,
}

impl QubitReduction {
    pub fn density_matrix(&self) -> Result<QubitDensityMatrix, FockError> {
        let tr = self.block.trace().re;
        if tr <= 0.0 {
            return Err(FockError::EmptyTwoPhotonSector {
                a0: self.sectors.a0,
                a1: self.sectors.a1,
                overflow: self.overflow,
            });
        }
        QubitDensityMatrix::new(self.block / Complex64::new(tr, 0.0))
    }

    /// Two-photon block weighted by the ensemble's probability.
    pub fn weighted_block(&self) -> &Matrix4<Complex64> {
        &self.block
    }
}

/// Classifies an ensemble supported on two spatial modes by photon presence.
///
/// The two-photon block traces out spectral bins, so it is exact for the
/// polarization qubits even when photons carry distinguishing labels.
pub fn sector_decomposition(
    ens: &StateEnsemble,
    pair: (u32, u32),
) -> Result<QubitReduction, FockError> {
    let layout = ens.layout();
    let ra = layout.spatial_indices(pair.0)?;
    let rb = layout.spatial_indices(pair.1)?;
    let bins = layout.spectral_bins();
    let (mut m0, mut m1, mut m2, mut over) = (0.0, 0.0, 0.0, 0.0);
    let mut block = Matrix4::<Complex64>::zeros();
    for b in ens.branches() {
        // Dual-rail amplitudes grouped by spectral labels of the two photons.
        let mut by_bins: BTreeMap<(usize, usize), Vector4<Complex64>> = BTreeMap::new();
        for (occ, amp) in b.state.iter() {
            let p = amp.norm_sqr() * b.weight;
            let outside = occ
                .counts()
                .iter()
                .enumerate()
                .any(|(i, &n)| n > 0 && !ra.contains(&i) && !rb.contains(&i));
            if outside {
                return Err(FockError::PhotonsOutsidePair(pair.0, pair.1));
            }
            let na: u32 = ra.clone().map(|i| u32::from(occ.get(i))).sum();
            let nb: u32 = rb.clone().map(|i| u32::from(occ.get(i))).sum();
            match (na, nb) {
                (0, 0) => m0 += p,
                (1, 0) | (0, 1) => m1 += p,
                (1, 1) => {
                    m2 += p;
                    let ia = ra.clone().find(|&i| occ.get(i) == 1).unwrap() - ra.start;
                    let ib = rb.clone().find(|&i| occ.get(i) == 1).unwrap() - rb.start;
                    let (pa, ba) = (ia / bins, ia % bins);
                    let (pb, bb) = (ib / bins, ib % bins);
                    by_bins.entry((ba, bb)).or_insert_with(Vector4::zeros)[pa * 2 + pb] += amp;
                }
                _ => over += p,
            }
        }
        for v in by_bins.values() {
            block += v * v.adjoint() * Complex64::new(b.weight, 0.0);
        }
    }
    let total = m0 + m1 + m2 + over;
    if total <= 0.0 {
        return Err(FockError::EmptyEnsemble);
    }
    Ok(QubitReduction {
        sectors: FockSectorWeights {
            a0: m0 / total,
            a1: m1 / total,
            a2: m2 / total,
        },
        overflow: over / total,
        total,
        block,
    })
}

/// Sector weights plus the normalized two-photon density matrix.
pub fn reduce_to_qubits(
    ens: &StateEnsemble,
    pair: (u32, u32),
) -> Result<(FockSectorWeights, QubitDensityMatrix), FockError> {
    let red = sector_decomposition(ens, pair)?;
    let rho = red.density_matrix()?;
    Ok((red.sectors, rho))
}
