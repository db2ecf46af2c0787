use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use serde::Serialize;

use super::exec::{compile, Executable, Herald};
use super::ProtocolError;
use crate::circuitdsl::{CircuitSpec, Statement};
use crate::detection::{ClickPattern, DetectorConfig, MeasuredEnsemble};
use crate::fock::{bell, sector_decomposition, OpticalMode, Pol, QubitDensityMatrix};
use crate::optics::ModeUnitary;
use crate::sources::PairState;

/// Bell-state identity announced by a two-photon analyzer.
pub type BellLabel = PairState;

/// Single-qubit Pauli correction applied to one polarization qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Pauli {
    I,
    X,
    Z,
    XZ,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Z, Pauli::XZ];

    /// Matrix in the {H, V} basis. X is a 45° half-wave plate, Z a 0° one,
    /// and XZ the product X·Z.
    pub fn matrix(self) -> Matrix2<Complex64> {
        let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        match self {
            Pauli::I => Matrix2::new(o, z, z, o),
            Pauli::X => Matrix2::new(z, o, o, z),
            Pauli::Z => Matrix2::new(o, z, z, -o),
            Pauli::XZ => Matrix2::new(z, -o, o, z),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Pauli::I => "I",
            Pauli::X => "X",
            Pauli::Z => "Z",
            Pauli::XZ => "XZ",
        }
    }

    /// The correction as a polarization unitary on `spatial` (bin 0).
    pub fn unitary(self, spatial: u32) -> ModeUnitary {
        polarization_unitary(spatial, &self.matrix())
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub(crate) fn polarization_unitary(spatial: u32, m: &Matrix2<Complex64>) -> ModeUnitary {
    let modes = vec![OpticalMode::new(spatial, Pol::H), OpticalMode::new(spatial, Pol::V)];
    let dm = DMatrix::from_row_slice(2, 2, &[m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]]);
    ModeUnitary::new(modes, dm).expect("2x2 polarization unitary")
}

/// Applies `p` to the second qubit of a two-qubit operator.
pub(crate) fn correct_second(block: &Matrix4<Complex64>, p: Pauli) -> Matrix4<Complex64> {
    let k = Matrix2::<Complex64>::identity().kronecker(&p.matrix());
    k * block * k.adjoint()
}

/// Analyzer in front of the second Bell-state measurement of the swap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Bsm2Design {
    /// PBS in the ± basis with H/V readout (opposite basis to BSM I).
    Circular,
    /// Same analyzer as BSM I: plain PBS with ± readout.
    Plain,
}

/// Bell state announced when a two-arm analyzer sees one photon of
/// polarization `first` in one arm and `second` in the other.
///
/// A PBS with ± readout (BSM I, the plain variant and the teleport BSM)
/// separates φ⁺ (equal readout) from φ⁻. The circular analyzer separates
/// φ⁺ from ψ⁺.
pub fn bsm_outcome(design: Bsm2Design, first: Pol, second: Pol) -> BellLabel {
    match (design, first == second) {
        (_, true) => PairState::PhiPlus,
        (Bsm2Design::Plain, false) => PairState::PhiMinus,
        (Bsm2Design::Circular, false) => PairState::PsiPlus,
    }
}

/// Correction per herald name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CorrectionTable {
    pub entries: BTreeMap<String, Pauli>,
}

impl CorrectionTable {
    pub fn get(&self, herald: &str) -> Result<Pauli, ProtocolError> {
        self.entries
            .get(herald)
            .copied()
            .ok_or_else(|| ProtocolError::MissingCorrection(herald.to_string()))
    }
}

/// Swap corrections on mode 6 by (BSM I, BSM II) outcome, derived with
/// `derive_swap_corrections` on the ideal circuit and frozen here.
const SWAP_CIRCULAR: [((BellLabel, BellLabel), Pauli); 4] = [
    ((PairState::PhiPlus, PairState::PhiPlus), Pauli::I),
    ((PairState::PhiPlus, PairState::PsiPlus), Pauli::X),
    ((PairState::PhiMinus, PairState::PhiPlus), Pauli::Z),
    ((PairState::PhiMinus, PairState::PsiPlus), Pauli::XZ),
];

const SWAP_PLAIN: [((BellLabel, BellLabel), Pauli); 4] = [
    ((PairState::PhiPlus, PairState::PhiPlus), Pauli::I),
    ((PairState::PhiPlus, PairState::PhiMinus), Pauli::Z),
    ((PairState::PhiMinus, PairState::PhiPlus), Pauli::Z),
    ((PairState::PhiMinus, PairState::PhiMinus), Pauli::I),
];

/// Name of the swap herald for the given readout on modes 2, 3, 4, 5.
pub(crate) fn swap_herald_name(p: [Pol; 4]) -> String {
    format!("swap_2{}_3{}_4{}_5{}", p[0], p[1], p[2], p[3])
}

/// Readouts of all sixteen accepted swap patterns, H before V per arm.
pub(crate) fn swap_readouts() -> Vec<[Pol; 4]> {
    let mut out = Vec::with_capacity(16);
    for bits in 0..16u32 {
        let pol = |k: u32| if bits >> (3 - k) & 1 == 0 { Pol::H } else { Pol::V };
        out.push([pol(0), pol(1), pol(2), pol(3)]);
    }
    out
}

/// Bell outcomes of both swap analyzers for one readout.
pub fn swap_outcome(design: Bsm2Design, p: [Pol; 4]) -> (BellLabel, BellLabel) {
    (
        bsm_outcome(Bsm2Design::Plain, p[0], p[1]),
        bsm_outcome(design, p[2], p[3]),
    )
}

/// The frozen swap table expanded to the sixteen herald names.
pub fn canonical_swap_table(design: Bsm2Design) -> CorrectionTable {
    let frozen = match design {
        Bsm2Design::Circular => &SWAP_CIRCULAR,
        Bsm2Design::Plain => &SWAP_PLAIN,
    };
    let entries = swap_readouts()
        .into_iter()
        .map(|p| {
            let key = swap_outcome(design, p);
            let pauli = frozen.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
            (swap_herald_name(p), pauli.expect("frozen table covers every outcome"))
        })
        .collect();
    CorrectionTable { entries }
}

/// Teleport corrections on Bob's photon: φ⁺ needs nothing, φ⁻ a Z flip.
pub fn canonical_teleport_table() -> CorrectionTable {
    let mut entries = BTreeMap::new();
    for a in [Pol::H, Pol::V] {
        for b in [Pol::H, Pol::V] {
            let pauli = match bsm_outcome(Bsm2Design::Plain, a, b) {
                PairState::PhiPlus => Pauli::I,
                _ => Pauli::Z,
            };
            entries.insert(format!("tel_6{a}_7{b}"), pauli);
        }
    }
    CorrectionTable { entries }
}

/// First-order, lossless, perfect-detector version of a circuit: pair
/// truncation 1, unit efficiencies, no dark counts, no loss, no spectral
/// mismatch.
pub(crate) fn ideal_variant(spec: &CircuitSpec) -> CircuitSpec {
    let statements = spec
        .statements
        .iter()
        .filter(|s| !matches!(s, Statement::Loss { .. } | Statement::Overlap { .. }))
        .cloned()
        .map(|s| match s {
            Statement::Detector(mut d) => {
                d.eff = 1.0;
                d.dark = None;
                Statement::Detector(d)
            }
            other => other,
        })
        .collect();
    CircuitSpec {
        modes: spec.modes,
        truncation: Some(1),
        statements,
    }
}

/// Detectors off the output pair, with each herald re-indexed onto them.
pub(crate) fn herald_subset(
    ex: &Executable,
    pair: (u32, u32),
) -> (DetectorConfig, Vec<(Herald, ClickPattern, ClickPattern)>) {
    let sub = ex
        .detectors
        .subset(|d| d.spatial != pair.0 && d.spatial != pair.1);
    let remap = |mask: ClickPattern| {
        ex.detectors
            .labels(mask)
            .into_iter()
            .fold(0u32, |m, l| m | 1 << sub.position(l).expect("herald detector kept"))
    };
    let heralds = ex
        .heralds
        .iter()
        .map(|h| (h.clone(), ClickPattern(remap(h.clicks)), ClickPattern(remap(h.silent))))
        .collect();
    (sub, heralds)
}

/// The two unheralded output modes of a heralded-pair circuit.
pub(crate) fn output_pair(ex: &Executable) -> Result<(u32, u32), ProtocolError> {
    match ex.unheralded_modes()[..] {
        [a, b] => Ok((a, b)),
        ref other => Err(ProtocolError::Layout(format!(
            "expected two output modes outside every herald, found {other:?}"
        ))),
    }
}

/// Picks, for every herald, the Pauli on the second output mode that
/// maximizes fidelity to φ⁺ on the ideal first-order version of `spec`.
pub fn derive_swap_corrections(spec: &CircuitSpec) -> Result<CorrectionTable, ProtocolError> {
    let ex = compile(&ideal_variant(spec))?;
    let pair = output_pair(&ex)?;
    let ens = ex.evolve()?;
    let (sub, heralds) = herald_subset(&ex, pair);
    let measured = MeasuredEnsemble::new(&ens, &sub)?;
    let target = bell::phi_plus();
    let mut entries = BTreeMap::new();
    for (h, clicks, silent) in heralds {
        let hs = measured.herald_partial(clicks, silent);
        let Some(cond) = hs.conditional else {
            return Err(ProtocolError::MissingCorrection(h.name));
        };
        let block = *sector_decomposition(&cond, pair)?.weighted_block();
        let mut scored: Vec<(f64, Pauli)> = Pauli::ALL
            .iter()
            .map(|&p| {
                let c = correct_second(&block, p);
                let tr = c.trace().re;
                let f = if tr > 0.0 {
                    QubitDensityMatrix::new(c / Complex64::new(tr, 0.0))
                        .map(|r| r.overlap(&target))
                        .unwrap_or(0.0)
                } else {
                    0.0
                };
                (f, p)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        if scored[0].0 - scored[1].0 <= 1e-9 {
            return Err(ProtocolError::AmbiguousCorrection {
                herald: h.name,
                first: scored[0].1,
                second: scored[1].1,
                fidelity: scored[0].0,
            });
        }
        entries.insert(h.name, scored[0].1);
    }
    Ok(CorrectionTable { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_matrices_are_unitary() {
        for p in Pauli::ALL {
            let m = p.matrix();
            assert!((m * m.adjoint() - Matrix2::identity()).norm() < 1e-15);
        }
        assert_eq!(Pauli::X.matrix() * Pauli::Z.matrix(), Pauli::XZ.matrix());
    }

    #[test]
    fn tables_cover_all_patterns() {
        for d in [Bsm2Design::Circular, Bsm2Design::Plain] {
            assert_eq!(canonical_swap_table(d).entries.len(), 16);
        }
        let t = canonical_teleport_table();
        assert_eq!(t.get("tel_6H_7H").unwrap(), Pauli::I);
        assert_eq!(t.get("tel_6H_7V").unwrap(), Pauli::Z);
        assert!(t.get("nope").is_err());
    }

    #[test]
    fn derivation_reproduces_frozen_tables() {
        use crate::protocol::{build_swap_circuit, SwapConfig};
        for d in [Bsm2Design::Circular, Bsm2Design::Plain] {
            // lossy, noisy settings: derivation strips them itself
            let cfg = SwapConfig {
                bsm2: d,
                visibility: 0.9,
                ..SwapConfig::default()
            };
            let derived = derive_swap_corrections(&build_swap_circuit(&cfg).unwrap()).unwrap();
            assert_eq!(derived, canonical_swap_table(d), "{d:?}");
        }
    }
}

