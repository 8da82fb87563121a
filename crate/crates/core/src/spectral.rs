//! Diagonal spectral representation of the generator `A`.
//!
//! Every object here lives in a truncated eigenbasis `h_1, ..., h_N`: a state is
//! the coefficient vector `x_n = <h_n, x>`, the generator acts as
//! `A h_n = lambda_n h_n` with `lambda_n < 0`, and the interpolation norms are
//! `||x||_{H_r} = (sum_n |lambda_n|^{2r} x_n^2)^{1/2}`.
//!
//! Indices are 0-based in code; mode `n` of the mathematical description is
//! stored at position `n - 1`.

use std::f64::consts::PI;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{range_error, Error, Result};

/// Coefficients of an element of `H` in the eigenbasis of `A`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(len: usize) -> Self {
        StateVector(vec![0.0; len])
    }

    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        StateVector(coeffs)
    }

    /// Unit vector `e_index` (0-based).
    pub fn basis(len: usize, index: usize) -> Self {
        let mut v = Self::zeros(len);
        v.0[index] = 1.0;
        v
    }

    pub fn dot(&self, other: &StateVector) -> f64 {
        assert_eq!(self.len(), other.len(), "state dimensions differ");
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.iter().map(|a| a * a).sum()
    }

    /// The `H`-norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> StateVector {
        StateVector(self.iter().map(|a| a * factor).collect())
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: f64, other: &StateVector) {
        assert_eq!(self.len(), other.len(), "state dimensions differ");
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += factor * b;
        }
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        assert_eq!(self.len(), other.len(), "state dimensions differ");
        StateVector(self.iter().zip(other.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|a| a.is_finite())
    }
}

impl Deref for StateVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        StateVector(v)
    }
}

/// Diagonal negative-definite generator with nonincreasing eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
}

impl SpectralOperator {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidOperator("no eigenvalues".into()));
        }
        for (n, &lambda) in eigenvalues.iter().enumerate() {
            if !lambda.is_finite() || lambda >= 0.0 {
                return Err(Error::InvalidOperator(format!(
                    "eigenvalue {} = {lambda} is not a finite negative number",
                    n + 1
                )));
            }
        }
        if let Some(n) = eigenvalues.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::InvalidOperator(format!(
                "eigenvalues must be nonincreasing, but lambda_{} = {} < lambda_{} = {}",
                n + 1,
                eigenvalues[n],
                n + 2,
                eigenvalues[n + 1]
            )));
        }
        Ok(SpectralOperator { eigenvalues })
    }

    /// Dirichlet Laplacian on the unit interval scaled by `diffusivity`:
    /// `lambda_n = -diffusivity * pi^2 n^2`.
    pub fn dirichlet_laplacian(modes: usize, diffusivity: f64) -> Result<Self> {
        if !(diffusivity > 0.0 && diffusivity.is_finite()) {
            return Err(range_error("diffusivity", diffusivity, "must be positive"));
        }
        Self::new(
            (1..=modes)
                .map(|n| -diffusivity * PI * PI * (n as f64).powi(2))
                .collect(),
        )
    }

    /// `lambda_n = -scale * n^exponent`.
    pub fn power_law(modes: usize, scale: f64, exponent: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(range_error("scale", scale, "must be positive"));
        }
        if !(exponent >= 0.0 && exponent.is_finite()) {
            return Err(range_error("exponent", exponent, "must be nonnegative"));
        }
        Self::new(
            (1..=modes)
                .map(|n| -scale * (n as f64).powf(exponent))
                .collect(),
        )
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `sup_n lambda_n`; the first eigenvalue under the canonical ordering.
    pub fn sup_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `inf_{n > kept} |lambda_n|`, i.e. `|lambda_{kept+1}|`, or `None` when every
    /// stored mode is kept.
    pub fn tail_infimum(&self, kept: usize) -> Option<f64> {
        self.eigenvalues.get(kept).map(|l| l.abs())
    }

    /// Diagonal of `e^{tA}`.
    pub fn semigroup_factors(&self, t: f64) -> Result<Vec<f64>> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.eigenvalues.iter().map(|l| (l * t).exp()).collect())
    }

    /// `e^{tA} x`.
    pub fn semigroup_apply(&self, t: f64, x: &StateVector) -> Result<StateVector> {
        assert_eq!(x.len(), self.dim(), "state dimension differs from operator");
        let factors = self.semigroup_factors(t)?;
        Ok(StateVector(
            factors.iter().zip(x.iter()).map(|(f, a)| f * a).collect(),
        ))
    }

    /// `|lambda_n|^r` for every mode.
    pub fn power_weights(&self, r: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| l.abs().powf(r)).collect()
    }

    /// `||x||_{H_r} = ||(-A)^r x||_H`.
    pub fn fractional_norm(&self, r: f64, x: &StateVector) -> f64 {
        assert_eq!(x.len(), self.dim(), "state dimension differs from operator");
        if r == 0.0 {
            return x.norm();
        }
        self.eigenvalues
            .iter()
            .zip(x.iter())
            .map(|(l, a)| l.abs().powf(2.0 * r) * a * a)
            .sum::<f64>()
            .sqrt()
    }

    /// `||(-A)^r||_{L(H)}` for `r <= 0`, attained at the least negative eigenvalue.
    pub fn neg_power_operator_norm(&self, r: f64) -> Result<f64> {
        neg_power_operator_norm(self.sup_eigenvalue(), r)
    }
}

/// `||(-A)^r||_{L(H)} = |sup lambda|^r` for `r <= 0`.
pub fn neg_power_operator_norm(sup_eigenvalue: f64, r: f64) -> Result<f64> {
    if !(r <= 0.0) {
        return Err(range_error(
            "r",
            r,
            "positive powers of -A are unbounded operators",
        ));
    }
    if !(sup_eigenvalue < 0.0) {
        return Err(range_error(
            "sup_eigenvalue",
            sup_eigenvalue,
            "must be negative",
        ));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    Ok(sup_eigenvalue.abs().powf(r))
}

/// Finite set of retained basis indices, `P_I` on the `H` side or `P̂_J` on the
/// `U` side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionIndex {
    mask: Vec<bool>,
}

impl ProjectionIndex {
    pub fn all(dim: usize) -> Self {
        ProjectionIndex {
            mask: vec![true; dim],
        }
    }

    pub fn empty(dim: usize) -> Self {
        ProjectionIndex {
            mask: vec![false; dim],
        }
    }

    /// The first `kept` modes (`{1, ..., kept}`), clamped to `dim`.
    pub fn prefix(kept: usize, dim: usize) -> Self {
        ProjectionIndex {
            mask: (0..dim).map(|i| i < kept).collect(),
        }
    }

    pub fn from_indices(dim: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = vec![false; dim];
        for i in indices {
            if i >= dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: i + 1,
                });
            }
            mask[i] = true;
        }
        Ok(ProjectionIndex { mask })
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
    }

    /// `Some(k)` when the set is exactly `{1, ..., k}`.
    pub fn prefix_len(&self) -> Option<usize> {
        let k = self.count();
        self.mask[..k].iter().all(|&m| m).then_some(k)
    }

    /// `P_I x`: zero every coefficient outside the set.
    pub fn project(&self, x: &StateVector) -> StateVector {
        assert_eq!(
            x.len(),
            self.dim(),
            "state dimension differs from index set"
        );
        StateVector(
            x.iter()
                .zip(&self.mask)
                .map(|(&a, &m)| if m { a } else { 0.0 })
                .collect(),
        )
    }
}

/// Operator description as found in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// `lambda_n = -diffusivity * pi^2 n^2`, `n = 1..=modes`.
    DirichletLaplacian {
        modes: usize,
        #[serde(default = "one")]
        diffusivity: f64,
    },
    /// `lambda_n = -scale * n^exponent`.
    PowerLaw {
        modes: usize,
        scale: f64,
        exponent: f64,
    },
    Explicit {
        eigenvalues: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl OperatorSpec {
    pub fn build(&self) -> Result<SpectralOperator> {
        match self {
            OperatorSpec::DirichletLaplacian { modes, diffusivity } => {
                SpectralOperator::dirichlet_laplacian(*modes, *diffusivity)
            }
            OperatorSpec::PowerLaw {
                modes,
                scale,
                exponent,
            } => SpectralOperator::power_law(*modes, *scale, *exponent),
            OperatorSpec::Explicit { eigenvalues } => SpectralOperator::new(eigenvalues.clone()),
        }
    }

    /// Growth exponent `a` in `|lambda_n| ~ n^a`, when the rule has one.
    pub fn growth_exponent(&self) -> Option<f64> {
        match self {
            OperatorSpec::DirichletLaplacian { .. } => Some(2.0),
            OperatorSpec::PowerLaw { exponent, .. } => Some(*exponent),
            OperatorSpec::Explicit { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn semigroup_examples() {
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        let x = StateVector(vec![3.0]);
        assert_eq!(op.semigroup_apply(0.0, &x).unwrap().0, vec![3.0]);

        let y = op
            .semigroup_apply(2f64.ln(), &StateVector(vec![1.0]))
            .unwrap();
        assert!(close(y[0], 0.5, 1e-15));

        let op = SpectralOperator::new(vec![-1.0, -4.0]).unwrap();
        let y = op
            .semigroup_apply(1.0, &StateVector(vec![1.0, 1.0]))
            .unwrap();
        assert!(close(y[0], (-1f64).exp(), 1e-15));
        assert!(close(y[1], (-4f64).exp(), 1e-15));
    }

    #[test]
    fn semigroup_rejects_negative_time() {
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        assert!(matches!(
            op.semigroup_apply(-0.1, &StateVector(vec![1.0])),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn fractional_norm_examples() {
        let op = SpectralOperator::new(vec![-4.0, -9.0]).unwrap();
        assert!(close(
            op.fractional_norm(0.5, &StateVector::basis(2, 0)),
            2.0,
            1e-15
        ));
        let x = StateVector(vec![3.0, 4.0]);
        assert_eq!(op.fractional_norm(0.0, &x), 5.0);

        let op = SpectralOperator::new(vec![-PI * PI]).unwrap();
        assert!(close(
            op.fractional_norm(-0.5, &StateVector::basis(1, 0)),
            1.0 / PI,
            1e-15
        ));
    }

    #[test]
    fn projection_examples() {
        let x = StateVector(vec![1.0, 2.0, 3.0]);
        let first = ProjectionIndex::prefix(1, 3);
        assert_eq!(first.project(&x).0, vec![1.0, 0.0, 0.0]);
        assert_eq!(ProjectionIndex::all(3).project(&x), x);
        let y = StateVector(vec![5.0, 5.0]);
        assert_eq!(ProjectionIndex::empty(2).project(&y).0, vec![0.0, 0.0]);
    }

    #[test]
    fn neg_power_norm_examples() {
        assert!(close(
            neg_power_operator_norm(-PI * PI, -0.5).unwrap(),
            1.0 / PI,
            1e-15
        ));
        assert_eq!(neg_power_operator_norm(-7.0, 0.0).unwrap(), 1.0);
        assert_eq!(neg_power_operator_norm(-2.0, -1.0).unwrap(), 0.5);
        assert!(neg_power_operator_norm(-2.0, 0.5).is_err());
    }

    #[test]
    fn operator_validation() {
        assert!(SpectralOperator::new(vec![]).is_err());
        assert!(SpectralOperator::new(vec![-1.0, 0.0]).is_err());
        assert!(SpectralOperator::new(vec![-4.0, -1.0]).is_err());
        assert!(SpectralOperator::new(vec![-1.0, -1.0, -2.0]).is_ok());
        let op = SpectralOperator::dirichlet_laplacian(4, 1.0).unwrap();
        assert_eq!(op.sup_eigenvalue(), -PI * PI);
        assert!(close(op.tail_infimum(2).unwrap(), 9.0 * PI * PI, 1e-15));
        assert_eq!(op.tail_infimum(4), None);
    }

    #[test]
    fn prefix_detection() {
        assert_eq!(ProjectionIndex::prefix(3, 5).prefix_len(), Some(3));
        let odd = ProjectionIndex::from_indices(5, [0, 2]).unwrap();
        assert_eq!(odd.prefix_len(), None);
        assert!(ProjectionIndex::from_indices(2, [2]).is_err());
    }
}
