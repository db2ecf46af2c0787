//! Entanglement swapping and teleportation experiments: circuit builders,
//! exact and sampled evaluation, outcome corrections and sweeps.

mod correction;
mod exec;
mod swap;
mod sweep;
mod teleport;

pub use correction::{
    bsm_outcome, canonical_swap_table, canonical_teleport_table, derive_swap_corrections,
    swap_outcome, BellLabel, Bsm2Design, CorrectionTable, Pauli,
};
pub use exec::{compile, enable_partial_distinguishability, Executable, Herald, Op, DEFAULT_TRUNCATION};
pub use swap::{
    build_swap_circuit, run_swap_exact, run_swap_montecarlo, run_swap_spec,
    run_swap_spec_montecarlo, OutcomeSummary, SwapConfig, SwapMonteCarlo, SwapResult,
    LAB_ETA1, LAB_ETA6, LAB_SNSPD,
};
pub use sweep::{sweep_heralding, SweepRow, SWEEP_ETAS};
pub use teleport::{
    build_teleport_circuit, insert_prep, run_teleport, run_teleport_montecarlo, run_teleport_spec,
    teleport_hardware_circuit, InputState, TeleportConfig, TeleportMonteCarlo, TeleportResult,
    TeleportRow,
};

use thiserror::Error;

use crate::analytic::AnalyticError;
use crate::circuitdsl::Violation;
use crate::detection::DetectionError;
use crate::fock::FockError;
use crate::optics::OpticsError;
use crate::sources::SourceError;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("circuit is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("no accepted herald pattern has nonzero probability")]
    ZeroHerald,
    #[error("correction for herald `{herald}` is ambiguous: {first:?} and {second:?} both reach fidelity {fidelity}")]
    AmbiguousCorrection {
        herald: String,
        first: Pauli,
        second: Pauli,
        fidelity: f64,
    },
    #[error("herald `{0}` has no correction entry")]
    MissingCorrection(String),
    #[error("circuit layout not supported: {0}")]
    Layout(String),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Source(#[from] SourceError),
}

impl ProtocolError {
    /// True for results that are well-defined inputs with a degenerate
    /// outcome (as opposed to bad parameters).
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            ProtocolError::ZeroHerald | ProtocolError::Fock(FockError::EmptyTwoPhotonSector { .. })
        )
    }
}
