//! Linear-optical elements and the photon-loss channel.
//!
//! A [`ModeUnitary`] acts by creation-operator substitution
//! `a†_i → Σ_j U_ji a†_j`, so column `i` of the matrix is the image of input
//! mode `i`. Polarization matrices are written in the (H, V) basis.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{
    Branch, FockError, ModeLayout, Occupation, OpticalMode, Pol, PureState, RecordEntry,
    RecordKind, StateEnsemble,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("matrix is {rows}x{cols} but {modes} modes were given")]
    Shape { rows: usize, cols: usize, modes: usize },
    #[error("matrix is not unitary (‖U†U − I‖ = {0:e})")]
    NotUnitary(f64),
    #[error("mode {0} listed twice")]
    RepeatedMode(OpticalMode),
    #[error("mode {0} is not in the state's layout")]
    MissingMode(OpticalMode),
    #[error("spatial modes of a two-port element must differ (got {0} twice)")]
    SameSpatial(u32),
    #[error("transmissivity {0} outside [0, 1]")]
    BadEta(f64),
    #[error("overlap {0} outside [0, 1]")]
    BadOverlap(f64),
    #[error("angle {0} is not finite")]
    BadAngle(f64),
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Unitary acting on an ordered list of optical modes.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeUnitary {
    modes: Vec<OpticalMode>,
    matrix: DMatrix<Complex64>,
}

impl ModeUnitary {
    pub fn new(modes: Vec<OpticalMode>, matrix: DMatrix<Complex64>) -> Result<Self, OpticsError> {
        let k = modes.len();
        if matrix.nrows() != k || matrix.ncols() != k {
            return Err(OpticsError::Shape {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                modes: k,
            });
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(OpticsError::RepeatedMode(*m));
            }
        }
        let dev = (matrix.adjoint() * &matrix - DMatrix::identity(k, k)).norm();
        if dev > 1e-10 {
            return Err(OpticsError::NotUnitary(dev));
        }
        Ok(ModeUnitary { modes, matrix })
    }

    pub fn modes(&self) -> &[OpticalMode] {
        &self.modes
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn adjoint(&self) -> ModeUnitary {
        ModeUnitary {
            modes: self.modes.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    /// Replicates the action on every spectral bin (block diagonal). Modes
    /// must be given on bin 0.
    pub fn on_all_bins(&self, bins: usize) -> ModeUnitary {
        if bins == 1 {
            return self.clone();
        }
        let k = self.modes.len();
        let mut modes = Vec::with_capacity(k * bins);
        let mut matrix = DMatrix::zeros(k * bins, k * bins);
        for b in 0..bins {
            for m in &self.modes {
                modes.push(m.with_bin(b as u8));
            }
            matrix
                .view_mut((b * k, b * k), (k, k))
                .copy_from(&self.matrix);
        }
        ModeUnitary { modes, matrix }
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn pol_pair(spatial: u32) -> Vec<OpticalMode> {
    vec![
        OpticalMode::new(spatial, Pol::H),
        OpticalMode::new(spatial, Pol::V),
    ]
}

fn check_angle(theta: f64) -> Result<(), OpticsError> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(OpticsError::BadAngle(theta))
    }
}

/// Half-wave plate with fast axis at `theta` radians from H.
pub fn hwp(spatial: u32, theta: f64) -> Result<ModeUnitary, OpticsError> {
    check_angle(theta)?;
    let (s, co) = (2.0 * theta).sin_cos();
    let m = DMatrix::from_row_slice(2, 2, &[c(co), c(s), c(s), c(-co)]);
    ModeUnitary::new(pol_pair(spatial), m)
}

/// Quarter-wave plate with fast axis at `theta` radians from H.
pub fn qwp(spatial: u32, theta: f64) -> Result<ModeUnitary, OpticsError> {
    check_angle(theta)?;
    let (s, co) = theta.sin_cos();
    let i = Complex64::i();
    let off = (c(1.0) - i) * (s * co);
    let g = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
    let m = DMatrix::from_row_slice(
        2,
        2,
        &[
            g * (c(co * co) + i * (s * s)),
            g * off,
            g * off,
            g * (c(s * s) + i * (co * co)),
        ],
    );
    ModeUnitary::new(pol_pair(spatial), m)
}

/// Phase `e^{iφ}` on one polarization of a spatial mode.
pub fn phase(spatial: u32, pol: Pol, phi: f64) -> Result<ModeUnitary, OpticsError> {
    check_angle(phi)?;
    let m = DMatrix::from_row_slice(1, 1, &[Complex64::from_polar(1.0, phi)]);
    ModeUnitary::new(vec![OpticalMode::new(spatial, pol)], m)
}

/// Polarizing beam splitter: H transmitted, V exchanged between `a` and `b`
/// with no phase on reflection.
pub fn pbs(a: u32, b: u32) -> Result<ModeUnitary, OpticsError> {
    if a == b {
        return Err(OpticsError::SameSpatial(a));
    }
    let modes = vec![
        OpticalMode::new(a, Pol::H),
        OpticalMode::new(a, Pol::V),
        OpticalMode::new(b, Pol::H),
        OpticalMode::new(b, Pol::V),
    ];
    let mut m = DMatrix::zeros(4, 4);
    m[(0, 0)] = c(1.0);
    m[(2, 2)] = c(1.0);
    m[(3, 1)] = c(1.0);
    m[(1, 3)] = c(1.0);
    ModeUnitary::new(modes, m)
}

/// PBS in the ± basis: 22.5° half-wave plates on both inputs and outputs.
pub fn cpbs(a: u32, b: u32) -> Result<Vec<ModeUnitary>, OpticsError> {
    let t = 22.5f64.to_radians();
    Ok(vec![
        hwp(a, t)?,
        hwp(b, t)?,
        pbs(a, b)?,
        hwp(a, t)?,
        hwp(b, t)?,
    ])
}

/// Mixes the two spectral bins of a spatial mode so that a photon entering
/// in bin 0 leaves as `√v·bin0 + √(1−v)·bin1`.
pub fn spectral_overlap(spatial: u32, v: f64) -> Result<ModeUnitary, OpticsError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(OpticsError::BadOverlap(v));
    }
    let (p, q) = (v.sqrt(), (1.0 - v).sqrt());
    let mut modes = Vec::new();
    let mut m = DMatrix::zeros(4, 4);
    for (k, pol) in [Pol::H, Pol::V].into_iter().enumerate() {
        let base = OpticalMode::new(spatial, pol);
        modes.push(base);
        modes.push(base.with_bin(1));
        let o = 2 * k;
        m[(o, o)] = c(p);
        m[(o + 1, o)] = c(q);
        m[(o, o + 1)] = c(-q);
        m[(o + 1, o + 1)] = c(p);
    }
    ModeUnitary::new(modes, m)
}

type Expansion = Vec<(Vec<u8>, Complex64)>;

/// Output occupations and amplitudes for one input count tuple.
fn expand(u: &DMatrix<Complex64>, input: &[u8]) -> Expansion {
    let k = input.len();
    let mut poly: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
    poly.insert(vec![0; k], c(1.0));
    let mut norm = 1.0;
    for (i, &n) in input.iter().enumerate() {
        norm /= factorial(n).sqrt();
        for _ in 0..n {
            let mut next: BTreeMap<Vec<u8>, Complex64> = BTreeMap::new();
            for (mono, coef) in &poly {
                for j in 0..k {
                    let uji = u[(j, i)];
                    if uji == Complex64::default() {
                        continue;
                    }
                    let mut m = mono.clone();
                    m[j] += 1;
                    *next.entry(m).or_default() += coef * uji;
                }
            }
            poly = next;
        }
    }
    poly.into_iter()
        .map(|(m, coef)| {
            let f: f64 = m.iter().map(|&x| factorial(x).sqrt()).product();
            (m, coef * (norm * f))
        })
        .collect()
}

fn factorial(n: u8) -> f64 {
    (1..=u32::from(n)).map(f64::from).product()
}

/// Applies `u` to a pure state. Modes of `u` must exist in the layout as
/// given (no bin replication; see [`ModeUnitary::on_all_bins`]).
pub fn apply_unitary(state: &PureState, u: &ModeUnitary) -> Result<PureState, OpticsError> {
    let layout = state.layout();
    let idx: Vec<usize> = u
        .modes
        .iter()
        .map(|m| layout.index(*m).ok_or(OpticsError::MissingMode(*m)))
        .collect::<Result<_, _>>()?;
    let mut cache: HashMap<Vec<u8>, Expansion> = HashMap::new();
    let mut out: BTreeMap<Occupation, Complex64> = BTreeMap::new();
    for (occ, amp) in state.iter() {
        let input: Vec<u8> = idx.iter().map(|&i| occ.get(i)).collect();
        let terms = cache
            .entry(input)
            .or_insert_with_key(|inp| expand(&u.matrix, inp));
        for (outp, coef) in terms.iter() {
            let mut o = occ.clone();
            for (slot, &i) in idx.iter().enumerate() {
                o.counts_mut()[i] = outp[slot];
            }
            *out.entry(o).or_default() += amp * coef;
        }
    }
    Ok(PureState::from_map(layout.clone(), out, state.discarded()))
}

/// Applies a bin-0 element to every spectral bin of the layout.
pub fn apply_element(state: &PureState, u: &ModeUnitary) -> Result<PureState, OpticsError> {
    apply_unitary(state, &u.on_all_bins(state.layout().spectral_bins()))
}

pub fn apply_element_ensemble(
    ens: &StateEnsemble,
    u: &ModeUnitary,
) -> Result<StateEnsemble, OpticsError> {
    let full = u.on_all_bins(ens.layout().spectral_bins());
    ens.map_states(|s| apply_unitary(s, &full))
}

/// Polarization- and spectrum-independent loss on one spatial mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossChannel {
    pub spatial: u32,
    pub eta: f64,
}

impl LossChannel {
    pub fn new(spatial: u32, eta: f64) -> Result<Self, OpticsError> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(OpticsError::BadEta(eta));
        }
        Ok(LossChannel { spatial, eta })
    }
}

fn binomial(n: u8, k: u8) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Kraus decomposition of a pure state under loss on the given optical
/// modes. Returns one sub-normalized state per loss pattern.
fn loss_split(
    state: &PureState,
    modes: &[usize],
    eta: f64,
) -> BTreeMap<Vec<u8>, BTreeMap<Occupation, Complex64>> {
    let mut out: BTreeMap<Vec<u8>, BTreeMap<Occupation, Complex64>> = BTreeMap::new();
    for (occ, amp) in state.iter() {
        let ns: Vec<u8> = modes.iter().map(|&i| occ.get(i)).collect();
        let mut ks = vec![0u8; ns.len()];
        loop {
            let mut f = 1.0;
            for (&n, &k) in ns.iter().zip(&ks) {
                f *= (binomial(n, k)
                    * eta.powi(i32::from(n - k))
                    * (1.0 - eta).powi(i32::from(k)))
                .sqrt();
            }
            if f > 0.0 {
                let mut o = occ.clone();
                for (slot, &i) in modes.iter().enumerate() {
                    o.counts_mut()[i] = ns[slot] - ks[slot];
                }
                *out.entry(ks.clone()).or_default().entry(o).or_default() += amp * f;
            }
            if !advance(&mut ks, &ns) {
                break;
            }
        }
    }
    out
}

/// Odometer step over `0..=ns[i]` per slot; false once exhausted.
pub(crate) fn advance(ks: &mut [u8], ns: &[u8]) -> bool {
    for (k, &n) in ks.iter_mut().zip(ns) {
        if *k < n {
            *k += 1;
            return true;
        }
        *k = 0;
    }
    false
}

/// Applies the binomial loss channel to every branch.
pub fn apply_loss(ens: &StateEnsemble, ch: &LossChannel) -> Result<StateEnsemble, OpticsError> {
    if !(0.0..=1.0).contains(&ch.eta) {
        return Err(OpticsError::BadEta(ch.eta));
    }
    if ch.eta == 1.0 {
        return Ok(ens.clone());
    }
    let layout: Arc<ModeLayout> = ens.layout().clone();
    let modes: Vec<usize> = layout.spatial_indices(ch.spatial)?.collect();
    let mut branches = Vec::new();
    for b in ens.branches() {
        for (ks, amps) in loss_split(&b.state, &modes, ch.eta) {
            let state = PureState::from_map(layout.clone(), amps, b.state.discarded());
            if state.is_empty() {
                continue;
            }
            let mut record = b.record.clone();
            for (slot, &k) in ks.iter().enumerate() {
                if k > 0 {
                    record.push(RecordEntry {
                        kind: RecordKind::Lost,
                        mode: modes[slot],
                        count: k,
                    });
                }
            }
            branches.push(Branch {
                weight: b.weight,
                state: Arc::new(state),
                record,
                merged: b.merged,
            });
        }
    }
    Ok(StateEnsemble::from_branches(layout, branches).coalesce())
}
