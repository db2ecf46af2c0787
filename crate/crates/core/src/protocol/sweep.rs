use rayon::prelude::*;
use serde::Serialize;

use super::swap::{run_swap_exact, SwapConfig};
use super::ProtocolError;
use crate::analytic::{equivalent_km, noise_budget, sweep_constraint};

/// Channel efficiencies of the swapping experiment (0 to 100 km).
pub const SWEEP_ETAS: [f64; 5] = [1.0, 0.5, 0.18, 0.09, 0.03];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub eta: f64,
    pub km: f64,
    pub gamma: f64,
    /// Exact probability that both output photons are present.
    pub heralding_eff_exact: f64,
    /// Exact expectation of c6/(c4·η1·η6).
    pub a2_estimator: f64,
    /// Exact herald-weighted two-photon sector weight.
    pub a2_sector: f64,
    pub fidelity: f64,
    pub heralding_eff_model: f64,
    pub success_rate: f64,
    pub direct_transmission: f64,
}

/// Exact swap runs over `etas`, with the midpoint source rescaled so that
/// γεη stays at `constant`. Rows come back in input order.
pub fn sweep_heralding(
    base: &SwapConfig,
    etas: &[f64],
    constant: f64,
) -> Result<Vec<SweepRow>, ProtocolError> {
    etas.par_iter()
        .map(|&eta| {
            let gamma = sweep_constraint(base.eps, eta, constant)?;
            let cfg = SwapConfig { eta, gamma, ..*base };
            let model = noise_budget(gamma, base.eps, eta)?;
            let r = run_swap_exact(&cfg)?;
            Ok(SweepRow {
                eta,
                km: equivalent_km(eta),
                gamma,
                heralding_eff_exact: r.heralding_efficiency,
                a2_estimator: r.a2_estimator_exact,
                a2_sector: r.sectors.a2,
                fidelity: r.fidelity,
                heralding_eff_model: model.heralding_eff_model,
                success_rate: model.success_rate,
                direct_transmission: eta,
            })
        })
        .collect()
}
