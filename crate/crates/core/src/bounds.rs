//! Closed-form a priori constants: moment bound, temporal Hölder constant,
//! strong error bound, exponential moment bound and the spectral tail.
//!
//! Wherever a bound is stated for `p >= 2` the evaluators use `max{p, 2}`.

use serde::{Deserialize, Serialize};

use crate::error::{range_error, Error, Result};
use crate::noise::NoiseOperator;
use crate::spectral::{neg_power_operator_norm, ProjectionIndex, SpectralOperator};

/// Parameters shared by the bound evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Moment order.
    pub p: f64,
    /// Spatial regularity of the noise.
    pub beta: f64,
    /// Smoothness of the norm in which the error is measured.
    pub gamma: f64,
    /// Spatial convergence exponent.
    pub eta: f64,
    /// Temporal convergence exponent.
    pub rho: f64,
    pub horizon: f64,
    /// Constant in `||χ - 1||_{L^p} <= C |θ|^ρ`.
    pub c_chi: f64,
    /// `||B||_{HS(U, H_β)}`.
    pub hs_beta: f64,
    /// `||B||_{HS(U, H)}`.
    pub hs_zero: f64,
    pub sup_lambda: f64,
    /// `|θ|_T`.
    pub mesh: f64,
}

impl BoundInputs {
    /// Inputs for `op` and `b` with every exponent set to zero, `p = 2`,
    /// `C = 1`, and the mesh of a single step over `horizon`.
    pub fn for_operators(op: &SpectralOperator, b: &NoiseOperator, horizon: f64) -> Self {
        let beta = b.beta();
        BoundInputs {
            p: 2.0,
            beta,
            gamma: 0.0,
            eta: 0.0,
            rho: 0.0,
            horizon,
            c_chi: 1.0,
            hs_beta: b.hs_norm(op, beta),
            hs_zero: b.hs_norm(op, 0.0),
            sup_lambda: op.sup_eigenvalue(),
            mesh: horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(range_error(name, v, "must be finite and nonnegative"))
            }
        };
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(range_error("p", self.p, "moment order must be at least 1"));
        }
        if !self.beta.is_finite() {
            return Err(range_error("beta", self.beta, "must be finite"));
        }
        let top = 0.5 + self.beta;
        if !(self.gamma >= 0.0 && self.gamma < top) {
            return Err(range_error(
                "gamma",
                self.gamma,
                "must lie in [0, 1/2 + beta)",
            ));
        }
        if !(self.eta >= 0.0 && self.eta < top - self.gamma) {
            return Err(range_error(
                "eta",
                self.eta,
                "must lie in [0, 1/2 + beta - gamma)",
            ));
        }
        if !(self.rho >= 0.0 && self.rho < top - self.gamma && self.rho < 0.5) {
            return Err(range_error(
                "rho",
                self.rho,
                "must lie in [0, 1/2 + beta - gamma) and [0, 1/2)",
            ));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(range_error("horizon", self.horizon, "must be positive"));
        }
        if !(self.sup_lambda < 0.0) {
            return Err(range_error(
                "sup_lambda",
                self.sup_lambda,
                "must be negative",
            ));
        }
        finite_nonneg("c_chi", self.c_chi)?;
        finite_nonneg("hs_beta", self.hs_beta)?;
        finite_nonneg("hs_zero", self.hs_zero)?;
        finite_nonneg("mesh", self.mesh)?;
        Ok(())
    }

    /// Validated copy.
    pub fn checked(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    fn p2(&self) -> f64 {
        self.p.max(2.0)
    }

    fn t1(&self) -> f64 {
        self.horizon.max(1.0)
    }

    /// `|sup λ|^{-2β}`.
    fn decay_factor(&self) -> f64 {
        self.sup_lambda.abs().powf(-2.0 * self.beta)
    }

    fn neg_power(&self, r: f64) -> f64 {
        neg_power_operator_norm(self.sup_lambda, r.min(0.0)).expect("validated inputs")
    }
}

/// Bound on `sup_t (E ||O^{θ,I,J}_t||_{H_γ}^p)^{1/p}`:
///
/// `||(-A)^{min(0,γ-β)}|| 3p ||B||_β max{T,1}^{3/2} / (1 + 2β - 2max{γ,β})
///  · (1 + 4p² ||B||_β² |sup λ|^{-2β})`.
pub fn moment_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let p = inputs.p2();
    let g = inputs.gamma.max(inputs.beta);
    let hs = inputs.hs_beta;
    Ok(
        inputs.neg_power(inputs.gamma - inputs.beta) * 3.0 * p * hs * inputs.t1().powf(1.5)
            / (1.0 + 2.0 * inputs.beta - 2.0 * g)
            * (1.0 + 4.0 * p * p * hs * hs * inputs.decay_factor()),
    )
}

/// Constant `K` with `(E ||O_t - O_s||_{H_γ}^p)^{1/p} <= K (t - s)^ρ`:
///
/// `3p³ ||B||_β max{T,1}² max{|sup λ|^{-2β}, 1} (1 + 8||B||_β²)
///  ||(-A)^{min(0,γ-β)}|| / sqrt(1 + 2(β - max{γ,β} - ρ))`.
pub fn holder_constant(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let p = inputs.p2();
    let g = inputs.gamma.max(inputs.beta);
    let hs = inputs.hs_beta;
    Ok(3.0
        * p.powi(3)
        * hs
        * inputs.t1().powi(2)
        * inputs.decay_factor().max(1.0)
        * (1.0 + 8.0 * hs * hs)
        * inputs.neg_power(inputs.gamma - inputs.beta)
        / (1.0 + 2.0 * (inputs.beta - g - inputs.rho)).sqrt())
}

/// The two terms of [`error_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundTerms {
    /// Contribution of the spatial truncation of `B`.
    pub spatial: f64,
    /// Contribution of taming, truncation and time stepping.
    pub temporal: f64,
}

impl ErrorBoundTerms {
    pub fn total(&self) -> f64 {
        self.spatial + self.temporal
    }
}

/// Both terms of the bound on `sup_t (E ||O^{θ,I,J}_t - P_K O_t||_{H_γ}^p)^{1/p}`
/// given `tail_hs = ||B - P_I B P̂_J||_{HS(U, H_{β-η})}`.
pub fn error_bound_terms(inputs: &BoundInputs, tail_hs: f64) -> Result<ErrorBoundTerms> {
    inputs.validate()?;
    if !(tail_hs >= 0.0) || !tail_hs.is_finite() {
        return Err(range_error(
            "tail_hs",
            tail_hs,
            "must be finite and nonnegative",
        ));
    }
    let p = inputs.p2();
    let t1 = inputs.t1();
    let (beta, gamma, eta, rho) = (inputs.beta, inputs.gamma, inputs.eta, inputs.rho);
    let hs = inputs.hs_beta;

    let spatial = p * t1.powf(0.5 + beta)
        / (2.0 * (1.0 - 2.0 * (gamma + eta - beta).max(0.0))).sqrt()
        * inputs.neg_power(gamma + eta - beta)
        * tail_hs;
    let temporal = 8.0 * p.powi(3) * inputs.c_chi * t1.powf(1.5 + beta)
        / (1.0 - 2.0 * rho - 2.0 * (gamma - beta).max(0.0)).sqrt()
        * hs
        * inputs.neg_power(gamma - beta)
        * (1.0 + inputs.decay_factor() * hs * hs)
        * inputs.mesh.powf(rho);
    Ok(ErrorBoundTerms { spatial, temporal })
}

/// Strong error bound: sum of [`error_bound_terms`].
pub fn error_bound(inputs: &BoundInputs, tail_hs: f64) -> Result<f64> {
    error_bound_terms(inputs, tail_hs).map(|t| t.total())
}

/// Largest admissible `ε`: `1 / (8 max{||B||,1}² max{T,1})²`.
pub fn exp_moment_eps_max(hs_zero: f64, horizon: f64) -> f64 {
    let b1 = hs_zero.max(1.0);
    (8.0 * b1 * b1 * horizon.max(1.0)).powi(-2)
}

/// `2 / (1 - ε² [8 ||B|| max{||B||,1} max{T,1}]⁴)` on `[0, eps_max)`, `+∞`
/// elsewhere.
pub fn exp_moment_bound(eps: f64, hs_zero: f64, horizon: f64) -> f64 {
    if !(eps >= 0.0) || eps >= exp_moment_eps_max(hs_zero, horizon) {
        return f64::INFINITY;
    }
    let k = 8.0 * hs_zero * hs_zero.max(1.0) * horizon.max(1.0);
    let denom = 1.0 - eps * eps * k.powi(4);
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        2.0 / denom
    }
}

/// `||B - P_I B P̂_J||_{HS(U, H_r)}`.
pub fn spectral_tail_hs(
    op: &SpectralOperator,
    b: &NoiseOperator,
    kept_h: &ProjectionIndex,
    kept_u: &ProjectionIndex,
    r: f64,
) -> Result<f64> {
    if b.h_dim() != op.dim() {
        return Err(Error::Dimension {
            expected: op.dim(),
            got: b.h_dim(),
        });
    }
    if kept_h.dim() != b.h_dim() || kept_u.dim() != b.u_dim() {
        return Err(Error::InvalidNoise(
            "projection dimensions do not match the noise operator".into(),
        ));
    }
    Ok(b.projection_remainder(kept_h, kept_u).hs_norm(op, r))
}

/// Spectral tail compared with its majorant `|λ_{N+1}|^{-η} ||B||_{HS(U,H_β)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub kept: usize,
    pub eta: f64,
    pub tail: f64,
    pub majorant: f64,
}

impl TailCheck {
    pub fn holds(&self) -> bool {
        self.tail <= self.majorant * (1.0 + 1e-12)
    }
}

/// Tail of `B` outside the first `kept` modes measured in `H_{β-η}`, with its
/// majorant. With no modes beyond `kept` the tail and majorant are both 0.
pub fn spectral_tail_check(
    op: &SpectralOperator,
    b: &NoiseOperator,
    kept: usize,
    eta: f64,
) -> Result<TailCheck> {
    if !(eta >= 0.0) {
        return Err(range_error("eta", eta, "must be nonnegative"));
    }
    let beta = b.beta();
    let kept_h = ProjectionIndex::prefix(kept.min(op.dim()), op.dim());
    let tail = spectral_tail_hs(op, b, &kept_h, &ProjectionIndex::all(b.u_dim()), beta - eta)?;
    let majorant = match op.tail_infimum(kept) {
        Some(l) => l.abs().powf(-eta) * b.hs_norm(op, beta),
        None => 0.0,
    };
    Ok(TailCheck {
        kept,
        eta,
        tail,
        majorant,
    })
}

/// Slope of `log (E ||(I - P_N) O_t||²)^{1/2}` against `log |λ_{N+1}|` for
/// `|B_{nn}| ~ n^{-decay}` and `|λ_n| ~ n^{growth}`: `-(2 decay + growth - 1) / (2 growth)`.
pub fn implied_spatial_slope(decay: f64, growth: f64) -> Result<f64> {
    if !(growth > 0.0) {
        return Err(range_error("growth", growth, "must be positive"));
    }
    if !(2.0 * decay + growth > 1.0) {
        return Err(range_error(
            "decay",
            decay,
            "the spatial error is not square-summable",
        ));
    }
    Ok(-(2.0 * decay + growth - 1.0) / (2.0 * growth))
}
