//! Independent numerical checks: finite differences of the taming map, the
//! drift identity, and Monte Carlo comparisons of the exact increment law.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{range_error, Result};
use crate::mc::run_paths;
use crate::noise::{
    brute_force_convolution_oracle, sample_coupled_increment, IncrementCovariance, NoiseOperator,
};
use crate::rng::path_rng;
use crate::spectral::{SpectralOperator, StateVector};
use crate::taming::{ito_drift, psi, psi_double_prime_apply, psi_prime_apply};

/// Outcome of one oracle: the largest measured discrepancy against its
/// tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl OracleOutcome {
    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

/// Signature of a candidate `ψ'(z)u`.
pub type PsiPrime<'a> = &'a (dyn Fn(&StateVector, &StateVector) -> StateVector + Sync);

/// Signature of a candidate `ψ''(z)(u, v)`.
pub type PsiDoublePrime<'a> =
    &'a (dyn Fn(&StateVector, &StateVector, &StateVector) -> StateVector + Sync);

fn shifted(z: &StateVector, t: f64, u: &StateVector) -> StateVector {
    let mut x = z.clone();
    x.axpy(t, u);
    x
}

fn rel_error(approx: &StateVector, exact: &StateVector, floor: f64) -> f64 {
    approx.sub(exact).norm() / exact.norm().max(floor)
}

/// Relative error of `psi_prime(z, u)` against the central difference
/// `(ψ(z + εu) - ψ(z - εu)) / 2ε`. The denominator is floored at
/// `||u|| / (1 + ||z||²)`, the size of `ψ'(z)u` away from cancellation.
pub fn psi_prime_fd_error(z: &StateVector, u: &StateVector, eps: f64, psi_prime: PsiPrime) -> f64 {
    let fd = psi(&shifted(z, eps, u))
        .sub(&psi(&shifted(z, -eps, u)))
        .scaled(0.5 / eps);
    let floor = u.norm() / (1.0 + z.norm_sq());
    rel_error(&fd, &psi_prime(z, u), floor)
}

/// Relative error of `psi_double_prime(z, u, v)` against the central
/// difference of the analytic `ψ'(·)u` in direction `v`. The floor is
/// `||u|| ||v|| / (1 + ||z||²)^{3/2}`.
pub fn psi_double_prime_fd_error(
    z: &StateVector,
    u: &StateVector,
    v: &StateVector,
    eps: f64,
    psi_prime: PsiPrime,
    psi_double_prime: PsiDoublePrime,
) -> f64 {
    let fd = psi_prime(&shifted(z, eps, v), u)
        .sub(&psi_prime(&shifted(z, -eps, v), u))
        .scaled(0.5 / eps);
    let floor = u.norm() * v.norm() / (1.0 + z.norm_sq()).powf(1.5);
    rel_error(&fd, &psi_double_prime(z, u, v), floor)
}

/// Relative error of `psi_double_prime(z, u, v)` against the mixed second
/// difference of `ψ` itself.
pub fn psi_double_prime_mixed_fd_error(
    z: &StateVector,
    u: &StateVector,
    v: &StateVector,
    eps: f64,
    psi_double_prime: PsiDoublePrime,
) -> f64 {
    let at = |a: f64, b: f64| {
        let mut x = shifted(z, a * eps, u);
        x.axpy(b * eps, v);
        psi(&x)
    };
    let mut fd = at(1.0, 1.0).sub(&at(1.0, -1.0));
    fd.axpy(-1.0, &at(-1.0, 1.0));
    fd.axpy(1.0, &at(-1.0, -1.0));
    let fd = fd.scaled(0.25 / (eps * eps));
    let floor = u.norm() * v.norm() / (1.0 + z.norm_sq()).powf(1.5);
    rel_error(&fd, &psi_double_prime(z, u, v), floor)
}

/// `||ito_drift(z) - ½ Σ_j ψ''(z)(B u_j, B u_j)|| / ||½ Σ_j ...||`.
pub fn drift_identity_error(z: &StateVector, b: &NoiseOperator) -> f64 {
    let mut trace = StateVector::zeros(z.len());
    for j in 0..b.u_dim() {
        let col = b.column(j);
        trace.axpy(0.5, &psi_double_prime_apply(z, &col, &col));
    }
    let drift = ito_drift(z, b);
    let scale = trace.norm().max(drift.norm());
    if scale == 0.0 {
        0.0
    } else {
        drift.sub(&trace).norm() / scale
    }
}

/// Random `(z, u, v)` with `||z|| <= radius`: uniform radius, Gaussian
/// direction; `u`, `v` standard Gaussian.
pub fn random_triple<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    radius: f64,
) -> (StateVector, StateVector, StateVector) {
    let mut gauss = || -> StateVector {
        StateVector(
            (0..dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect(),
        )
    };
    let dir = gauss();
    let u = gauss();
    let v = gauss();
    let r = radius * rng.random::<f64>();
    let z = dir.scaled(r / dir.norm().max(f64::MIN_POSITIVE));
    (z, u, v)
}

/// Parameters of the taming-calculus oracles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TamingCheck {
    pub cases: usize,
    pub dim: usize,
    pub radius: f64,
    pub eps: f64,
    pub tolerance: f64,
    /// Step and tolerance of the mixed second difference of `ψ`.
    pub mixed_eps: f64,
    pub mixed_tolerance: f64,
    pub seed: u64,
}

impl Default for TamingCheck {
    fn default() -> Self {
        TamingCheck {
            cases: 100,
            dim: 5,
            radius: 10.0,
            eps: 1e-5,
            tolerance: 1e-6,
            mixed_eps: 1e-3,
            mixed_tolerance: 1e-4,
            seed: 0,
        }
    }
}

/// Finite-difference oracles for candidate derivatives: one outcome each for
/// `ψ'`, `ψ''` via `ψ'`, and `ψ''` via `ψ`.
pub fn check_taming_derivatives(
    cfg: &TamingCheck,
    psi_prime: PsiPrime,
    psi_double_prime: PsiDoublePrime,
) -> Vec<OracleOutcome> {
    let mut rng = path_rng(cfg.seed, 0);
    let (mut e1, mut e2, mut e3) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cfg.cases {
        let (z, u, v) = random_triple(&mut rng, cfg.dim, cfg.radius);
        e1 = e1.max(psi_prime_fd_error(&z, &u, cfg.eps, psi_prime));
        e2 = e2.max(psi_double_prime_fd_error(
            &z,
            &u,
            &v,
            cfg.eps,
            psi_prime,
            psi_double_prime,
        ));
        e3 = e3.max(psi_double_prime_mixed_fd_error(
            &z,
            &u,
            &v,
            cfg.mixed_eps,
            psi_double_prime,
        ));
    }
    let outcome = |name: &str, measured, tolerance| OracleOutcome {
        name: name.to_string(),
        measured,
        tolerance,
        cases: cfg.cases,
    };
    vec![
        outcome("psi_prime_central_difference", e1, cfg.tolerance),
        outcome("psi_double_prime_central_difference", e2, cfg.tolerance),
        outcome("psi_double_prime_mixed_difference", e3, cfg.mixed_tolerance),
    ]
}

/// The shipped derivatives under [`check_taming_derivatives`].
pub fn check_shipped_taming(cfg: &TamingCheck) -> Vec<OracleOutcome> {
    check_taming_derivatives(cfg, &psi_prime_apply, &psi_double_prime_apply)
}

/// Max relative drift-identity error over random `z` and dense random `B`.
pub fn check_drift_identity(
    cases: usize,
    dim: usize,
    radius: f64,
    seed: u64,
    tolerance: f64,
) -> OracleOutcome {
    let mut rng = path_rng(seed, 1);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (z, _, _) = random_triple(&mut rng, dim, radius);
        let coeffs = (0..dim * (dim + 1))
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let b = NoiseOperator::new(dim, dim + 1, coeffs, 0.0).expect("finite coefficients");
        worst = worst.max(drift_identity_error(&z, &b));
    }
    OracleOutcome {
        name: "ito_drift_half_trace_identity".into(),
        measured: worst,
        tolerance,
        cases,
    }
}

/// Entrywise comparison of empirical second moments of `(dW, Y)` with the
/// analytic covariance, in units of the Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceComparison {
    pub paths: usize,
    /// Largest `|empirical - analytic| / std_error` over all entries.
    pub max_z: f64,
    /// Largest absolute deviation over all entries.
    pub max_abs: f64,
}

impl CovarianceComparison {
    pub fn within(&self, z: f64) -> bool {
        self.max_z <= z
    }
}

fn analytic_joint(cov: &IncrementCovariance, a: usize, b: usize) -> f64 {
    let k = cov.u_dim();
    match (a < k, b < k) {
        (true, true) => cov.cov_ww(a, b),
        (true, false) => cov.cov_yw(b - k, a),
        (false, true) => cov.cov_yw(a - k, b),
        (false, false) => cov.cov_yy(a - k, b - k),
    }
}

fn compare_moments(cov: &IncrementCovariance, draws: &[Vec<f64>]) -> CovarianceComparison {
    let d = cov.u_dim() + cov.h_dim();
    let r = draws.len() as f64;
    let mut max_z = 0.0f64;
    let mut max_abs = 0.0f64;
    for a in 0..d {
        for b in a..d {
            let mean = draws.iter().map(|v| v[a] * v[b]).sum::<f64>() / r;
            let var = draws
                .iter()
                .map(|v| (v[a] * v[b] - mean).powi(2))
                .sum::<f64>()
                / (r - 1.0);
            let se = (var / r).sqrt();
            let dev = (mean - analytic_joint(cov, a, b)).abs();
            max_abs = max_abs.max(dev);
            let z = if se > 0.0 {
                dev / se
            } else if dev <= 1e-14 {
                0.0
            } else {
                f64::INFINITY
            };
            max_z = max_z.max(z);
        }
    }
    CovarianceComparison {
        paths: draws.len(),
        max_z,
        max_abs,
    }
}

fn joint(dw: Vec<f64>, y: StateVector) -> Vec<f64> {
    let mut v = dw;
    v.extend_from_slice(&y);
    v
}

/// Analytic covariance against the left-point Itô quadrature with
/// `substeps` subintervals, over `paths` independent paths.
pub fn covariance_vs_quadrature(
    op: &SpectralOperator,
    b: &NoiseOperator,
    h: f64,
    substeps: usize,
    paths: usize,
    seed: u64,
) -> Result<CovarianceComparison> {
    if paths < 2 {
        return Err(range_error(
            "paths",
            paths as f64,
            "need at least two paths",
        ));
    }
    let cov = IncrementCovariance::new(op, b, h)?;
    let draws = run_paths(paths, |i| {
        let (y, dw) = brute_force_convolution_oracle(op, b, h, substeps, &mut path_rng(seed, i))
            .expect("positive substep count");
        joint(dw, y)
    });
    Ok(compare_moments(&cov, &draws))
}

/// Analytic covariance against draws from the exact joint sampler.
pub fn sampler_covariance_check(
    op: &SpectralOperator,
    b: &NoiseOperator,
    h: f64,
    paths: usize,
    seed: u64,
) -> Result<CovarianceComparison> {
    if paths < 2 {
        return Err(range_error(
            "paths",
            paths as f64,
            "need at least two paths",
        ));
    }
    let cov = IncrementCovariance::new(op, b, h)?;
    let draws = run_paths(paths, |i| {
        let (y, dw) = sample_coupled_increment(&cov, &mut path_rng(seed, i));
        joint(dw, y)
    });
    Ok(compare_moments(&cov, &draws))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_derivatives_pass() {
        for o in check_shipped_taming(&TamingCheck::default()) {
            assert!(o.passed(), "{o:?}");
        }
        assert!(check_drift_identity(100, 4, 10.0, 3, 1e-12).passed());
    }

    #[test]
    fn sign_flipped_derivative_fails() {
        let flipped = |z: &StateVector, u: &StateVector| psi_prime_apply(z, u).scaled(-1.0);
        let out =
            check_taming_derivatives(&TamingCheck::default(), &flipped, &psi_double_prime_apply);
        assert!(!out[0].passed());
        assert!(out[0].measured > 1.0);
    }

    #[test]
    fn small_covariance_checks() {
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        let b = NoiseOperator::new(1, 1, vec![1.0], 0.0).unwrap();
        assert!(sampler_covariance_check(&op, &b, 1.0, 4000, 1)
            .unwrap()
            .within(5.0));
        assert!(covariance_vs_quadrature(&op, &b, 1.0, 64, 2000, 2)
            .unwrap()
            .within(5.0));
    }

    #[test]
    fn wrong_covariance_is_detected() {
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        let b = NoiseOperator::new(1, 1, vec![1.0], 0.0).unwrap();
        // draws from a different operator compared against the analytic law of `op`
        let other = SpectralOperator::new(vec![-4.0]).unwrap();
        let cov = IncrementCovariance::new(&op, &b, 1.0).unwrap();
        let draws: Vec<Vec<f64>> = (0..4000)
            .map(|i| {
                let (y, dw) =
                    brute_force_convolution_oracle(&other, &b, 1.0, 16, &mut path_rng(5, i))
                        .unwrap();
                joint(dw, y)
            })
            .collect();
        assert!(!compare_moments(&cov, &draws).within(5.0));
    }
}
