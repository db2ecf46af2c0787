//! Closed-form noise budget, rate models, classical benchmarks and the
//! estimators applied to coincidence counts.

use nalgebra::Matrix4;
use num_complex::Complex64;
use thiserror::Error;

use crate::fock::QubitDensityMatrix;

/// Fiber attenuation used for the equivalent-distance axis.
pub const FIBER_DB_PER_KM: f64 = 0.15;

/// Default γεη product for the constant-rate sweep (with ε = 0.02).
pub const DEFAULT_GAMMA_EPS_ETA: f64 = 6e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("gamma {0} must lie in [0, 1]")]
    Gamma(f64),
    #[error("epsilon {0} must lie in (0, 0.25)")]
    Epsilon(f64),
    #[error("channel efficiency {0} must lie in (0, 1]")]
    Eta(f64),
    #[error("gamma = {gamma} exceeds 1 at eta = {eta}; the smallest feasible eta is {min_eta}")]
    Infeasible { gamma: f64, eta: f64, min_eta: f64 },
    #[error("the gamma*eps*eta constant must be positive, got {0}")]
    Constant(f64),
    #[error("copy number {0} must be at least 1")]
    Copies(f64),
    #[error("target fidelity {0} must lie in (2/3, 1]")]
    TargetFidelity(f64),
    #[error("efficiency {0} must lie in (0, 1]")]
    Efficiency(f64),
    #[error("{0} must be positive")]
    ZeroDenominator(&'static str),
    #[error("{name} = {value} must lie in [0, 1]")]
    Unit { name: &'static str, value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct NoiseBudget {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub success_rate: f64,
    pub heralding_eff_model: f64,
}

impl NoiseBudget {
    pub fn total(&self) -> f64 {
        self.p0 + self.p1 + self.p2 + self.p3
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), AnalyticError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AnalyticError::Unit { name, value })
    }
}

fn check_eps(eps: f64) -> Result<(), AnalyticError> {
    if eps > 0.0 && eps < 0.25 {
        Ok(())
    } else {
        Err(AnalyticError::Epsilon(eps))
    }
}

fn check_eta(eta: f64) -> Result<(), AnalyticError> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(AnalyticError::Eta(eta))
    }
}

/// Leading-order probabilities of the four heralding event classes: the
/// wanted single-pair event (p0), double pairs from both outer sources (p1),
/// a midpoint double pair with one outer pair (p2), and a midpoint
/// triple pair (p3).
pub fn noise_budget(gamma: f64, eps: f64, eta: f64) -> Result<NoiseBudget, AnalyticError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(AnalyticError::Gamma(gamma));
    }
    check_eps(eps)?;
    check_eta(eta)?;
    let e3 = eps.powi(3);
    let se = eta.sqrt();
    let p0 = gamma * e3 * eta / 4.0;
    let p1 = eps.powi(4) / 16.0;
    let p2 = gamma * gamma * e3 * eta * eta / 8.0
        + gamma * gamma * e3 * eta.powf(1.5) * (1.0 - se) / 2.0;
    let p3 = gamma.powi(3) * e3 * eta * eta * (4.0 - 3.0 * se).powi(2) / 64.0;
    let success_rate = if p0 + p1 > 0.0 { p0 / (p0 + p1) } else { 0.0 };
    let total = p0 + p1 + p2 + p3;
    Ok(NoiseBudget {
        p0,
        p1,
        p2,
        p3,
        success_rate,
        heralding_eff_model: (p0 + p1) / total,
    })
}

/// Midpoint scaling γ that keeps γεη fixed.
pub fn sweep_constraint(eps: f64, eta: f64, constant: f64) -> Result<f64, AnalyticError> {
    check_eps(eps)?;
    check_eta(eta)?;
    if constant <= 0.0 || !constant.is_finite() {
        return Err(AnalyticError::Constant(constant));
    }
    let gamma = constant / (eps * eta);
    // tolerate rounding at the boundary point
    if gamma > 1.0 + 1e-12 {
        return Err(AnalyticError::Infeasible {
            gamma,
            eta,
            min_eta: constant / eps,
        });
    }
    Ok(gamma.min(1.0))
}

/// Equivalent fiber length for channel efficiency η, unrounded.
pub fn equivalent_km_exact(eta: f64) -> f64 {
    // + 0.0 turns the −0 at η = 1 into 0
    -10.0 * eta.log10() / FIBER_DB_PER_KM + 0.0
}

/// Equivalent fiber length rounded to the nearest 10 km.
pub fn equivalent_km(eta: f64) -> f64 {
    (equivalent_km_exact(eta) / 10.0).round() * 10.0 + 0.0
}

/// Optimal 1→N cloning fidelity (2N+1)/(3N); N may be fractional.
pub fn cloning_fidelity(n: f64) -> Result<f64, AnalyticError> {
    if !(n >= 1.0) {
        return Err(AnalyticError::Copies(n));
    }
    Ok((2.0 * n + 1.0) / (3.0 * n))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ClassicalStrategy {
    pub f0: f64,
    pub eta: f64,
    pub n_copies: f64,
    pub rate: f64,
}

/// Best classical transmission rate at target fidelity `f0`: send N clones.
pub fn classical_rate(f0: f64, eta: f64) -> Result<ClassicalStrategy, AnalyticError> {
    if !(f0 > 2.0 / 3.0 && f0 <= 1.0) {
        return Err(AnalyticError::TargetFidelity(f0));
    }
    check_eta(eta)?;
    let n = 1.0 / (3.0 * f0 - 2.0);
    Ok(ClassicalStrategy {
        f0,
        eta,
        n_copies: n,
        rate: eta * n,
    })
}

fn pauli_pair(a: [[Complex64; 2]; 2], b: [[Complex64; 2]; 2]) -> Matrix4<Complex64> {
    Matrix4::from_fn(|r, c| a[r / 2][c / 2] * b[r % 2][c % 2])
}

/// (1 + ⟨XX⟩ + ⟨ZZ⟩ − ⟨YY⟩)/4, the fidelity to φ⁺.
pub fn bell_fidelity(rho: &QubitDensityMatrix) -> f64 {
    let o = Complex64::new(0.0, 0.0);
    let l = Complex64::new(1.0, 0.0);
    let i = Complex64::i();
    let x = [[o, l], [l, o]];
    let y = [[o, -i], [i, o]];
    let z = [[l, o], [o, -l]];
    let xx = rho.expectation(&pauli_pair(x, x));
    let yy = rho.expectation(&pauli_pair(y, y));
    let zz = rho.expectation(&pauli_pair(z, z));
    (1.0 + xx + zz - yy) / 4.0
}

/// Ã2 = c6 / (c4 η1 η6).
pub fn a2_estimator(c6: f64, c4: f64, eta1: f64, eta6: f64) -> Result<f64, AnalyticError> {
    if !(c4 > 0.0) {
        return Err(AnalyticError::ZeroDenominator("c4"));
    }
    for e in [eta1, eta6] {
        if !(e > 0.0 && e <= 1.0) {
            return Err(AnalyticError::Efficiency(e));
        }
    }
    Ok(c6 / (c4 * eta1 * eta6))
}

/// R̃Tel = c8 / c5.
pub fn teleport_rate_estimator(c8: f64, c5: f64) -> Result<f64, AnalyticError> {
    if !(c5 > 0.0) {
        return Err(AnalyticError::ZeroDenominator("c5"));
    }
    Ok(c8 / c5)
}

/// R̃Q = A2 η_a² η_p / 2.
pub fn teleport_rate_model(a2: f64, eta_a: f64, eta_p: f64) -> Result<f64, AnalyticError> {
    check_unit("a2", a2)?;
    check_unit("eta_a", eta_a)?;
    check_unit("eta_p", eta_p)?;
    Ok(a2 * eta_a * eta_a * eta_p / 2.0)
}

pub fn advantage_ratio(r_quantum: f64, r_classical: f64) -> Result<f64, AnalyticError> {
    if !(r_classical > 0.0) {
        return Err(AnalyticError::ZeroDenominator("classical rate"));
    }
    Ok(r_quantum / r_classical)
}

/// One row of the constant-γεη heralding curve.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ModelRow {
    pub eta: f64,
    pub km: f64,
    pub gamma: f64,
    pub heralding_eff_model: f64,
    pub success_rate: f64,
    pub direct_transmission: f64,
}

pub fn model_row(eps: f64, eta: f64, constant: f64) -> Result<ModelRow, AnalyticError> {
    let gamma = sweep_constraint(eps, eta, constant)?;
    let nb = noise_budget(gamma, eps, eta)?;
    Ok(ModelRow {
        eta,
        km: equivalent_km_exact(eta),
        gamma,
        heralding_eff_model: nb.heralding_eff_model,
        success_rate: nb.success_rate,
        direct_transmission: eta,
    })
}

/// `count` channel efficiencies log-spaced from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i + 1 == count {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::bell;
    use approx::assert_relative_eq;

    #[test]
    fn budget_examples() {
        let nb = noise_budget(1.0, 0.02, 0.5).unwrap();
        assert_relative_eq!(nb.p0, 1e-6, max_relative = 1e-12);
        assert_relative_eq!(nb.p1, 1e-8, max_relative = 1e-12);
        assert!((nb.success_rate - 0.990).abs() < 5e-4);
        let nb = noise_budget(1.0, 0.02, 1.0).unwrap();
        assert_relative_eq!(nb.p2, 1e-6, max_relative = 1e-12);
        assert_relative_eq!(nb.p3, 1.25e-7, max_relative = 1e-12);
        let nb = noise_budget(0.06, 0.02, 0.5).unwrap();
        assert!((nb.success_rate - 0.857).abs() < 5e-4);
        assert!(noise_budget(1.1, 0.02, 0.5).is_err());
        assert!(noise_budget(1.0, 0.3, 0.5).is_err());
        assert!(noise_budget(1.0, 0.02, 0.0).is_err());
    }

    #[test]
    fn sweep_examples() {
        assert_relative_eq!(sweep_constraint(0.02, 0.5, 6e-4).unwrap(), 0.06, max_relative = 1e-12);
        assert_relative_eq!(sweep_constraint(0.02, 0.03, 6e-4).unwrap(), 1.0);
        match sweep_constraint(0.02, 0.02, 6e-4) {
            Err(AnalyticError::Infeasible { min_eta, .. }) => {
                assert_relative_eq!(min_eta, 0.03, max_relative = 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn success_rate_depends_only_on_gamma_eta() {
        for &ge in &[0.01, 0.03, 0.1] {
            let want = 1.0 / (1.0 + 0.02 / (4.0 * ge));
            for &eta in &[1.0, 0.5, 0.2, 0.1] {
                if ge / eta > 1.0 {
                    continue;
                }
                let nb = noise_budget(ge / eta, 0.02, eta).unwrap();
                assert!((nb.success_rate - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distance_mapping() {
        let km: Vec<f64> = [1.0, 0.5, 0.18, 0.09, 0.03].iter().map(|&e| equivalent_km(e)).collect();
        assert_eq!(km, vec![0.0, 20.0, 50.0, 70.0, 100.0]);
    }

    #[test]
    fn cloning_and_classical() {
        assert_eq!(cloning_fidelity(1.0).unwrap(), 1.0);
        assert_eq!(cloning_fidelity(2.0).unwrap(), 5.0 / 6.0);
        assert!((cloning_fidelity(1e9).unwrap() - 2.0 / 3.0).abs() < 1e-9);
        assert!(cloning_fidelity(0.5).is_err());
        let s = classical_rate(0.826, 0.01).unwrap();
        assert!((s.n_copies - 2.092).abs() < 1e-3);
        assert!((s.rate - 0.0209).abs() < 1e-4);
        assert_eq!(classical_rate(1.0, 0.3).unwrap().rate, 0.3);
        let s = classical_rate(5.0 / 6.0, 1.0).unwrap();
        assert!((s.rate - 2.0).abs() < 1e-12);
        assert!(classical_rate(2.0 / 3.0, 0.1).is_err());
        assert!(classical_rate(1.01, 0.1).is_err());
    }

    #[test]
    fn classical_inverts_cloning() {
        for i in 0..200 {
            let n = 1.0 + i as f64 * 0.37;
            let f = cloning_fidelity(n).unwrap();
            assert!((classical_rate(f, 1.0).unwrap().n_copies - n).abs() < 1e-12 * n.max(1.0) * 10.0);
        }
    }

    #[test]
    fn bell_fidelity_examples() {
        let phi = QubitDensityMatrix::from_pure(&bell::phi_plus());
        assert!((bell_fidelity(&phi) - 1.0).abs() < 1e-15);
        assert!((bell_fidelity(&QubitDensityMatrix::maximally_mixed()) - 0.25).abs() < 1e-15);
        let psi = QubitDensityMatrix::from_pure(&bell::psi_minus());
        assert!(bell_fidelity(&psi).abs() < 1e-15);
    }

    #[test]
    fn estimators() {
        assert!((a2_estimator(10.0, 100.0, 0.611, 0.628).unwrap() - 0.2606).abs() < 1e-4);
        assert_eq!(a2_estimator(0.611 * 0.628 * 100.0, 100.0, 0.611, 0.628).unwrap(), 1.0);
        assert_eq!(a2_estimator(0.0, 100.0, 0.611, 0.628).unwrap(), 0.0);
        assert!(a2_estimator(1.0, 0.0, 0.611, 0.628).is_err());
        assert!((teleport_rate_estimator(62.0, 1000.0).unwrap() - 0.062).abs() < 1e-15);
        assert!(teleport_rate_estimator(1.0, 0.0).is_err());
        assert_eq!(teleport_rate_model(1.0, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(teleport_rate_model(0.0, 0.7, 0.7).unwrap(), 0.0);
        assert!((advantage_ratio(0.062, 0.021).unwrap() - 2.952).abs() < 1e-3);
        assert_eq!(advantage_ratio(0.3, 0.3).unwrap(), 1.0);
        assert_eq!(advantage_ratio(0.0, 0.3).unwrap(), 0.0);
        assert!(advantage_ratio(0.1, 0.0).is_err());
    }

    #[test]
    fn log_spacing_hits_endpoints() {
        let v = log_spaced(0.03, 1.0, 40);
        assert_eq!(v.len(), 40);
        assert_eq!(v[0], 0.03);
        assert_eq!(v[39], 1.0);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }
}
