//! Exact Fock-space simulation of SPDC-based heralded entanglement swapping
//! and teleportation, with closed-form noise budgets and a small circuit
//! description language.

pub mod fock;
pub mod optics;
pub mod sources;
pub mod detection;
pub mod analytic;
pub mod circuitdsl;
pub mod protocol;
