//! The taming map `psi(v) = v / (1 + ||v||^2)` and its derivatives, together
//! with the drift and diffusion coefficients of the scheme written as a mild
//! Itô process.
//!
//! Everything is implemented from closed forms. Finite differences appear only
//! in [`crate::oracles`].

use crate::noise::NoiseOperator;
use crate::spectral::StateVector;

/// `psi(v) = v / (1 + ||v||_H^2)`; always `||psi(v)|| <= 1/2`.
pub fn psi(v: &StateVector) -> StateVector {
    v.scaled(1.0 / (1.0 + v.norm_sq()))
}

/// `psi'(z)(u) = u / (1 + ||z||^2) - 2 z <z, u> / (1 + ||z||^2)^2`.
pub fn psi_prime_apply(z: &StateVector, u: &StateVector) -> StateVector {
    let d = 1.0 + z.norm_sq();
    let zu = z.dot(u);
    let mut out = u.scaled(1.0 / d);
    out.axpy(-2.0 * zu / (d * d), z);
    out
}

/// `psi''(z)(u, v)`; symmetric in `(u, v)`.
pub fn psi_double_prime_apply(z: &StateVector, u: &StateVector, v: &StateVector) -> StateVector {
    let d = 1.0 + z.norm_sq();
    let d2 = d * d;
    let zu = z.dot(u);
    let zv = z.dot(v);
    let uv = u.dot(v);
    let mut out = StateVector::zeros(z.len());
    out.axpy(-2.0 * zv / d2, u);
    out.axpy(-2.0 * zu / d2, v);
    out.axpy(-2.0 * uv / d2 + 8.0 * zu * zv / (d2 * d), z);
    out
}

/// Drift of `psi(X)` for `X = ∫ B dW`:
/// `4 ||B* z||_U^2 z / (1+||z||^2)^3 - (2 B B* z + ||B||_HS^2 z) / (1+||z||^2)^2`.
pub fn ito_drift(z: &StateVector, b: &NoiseOperator) -> StateVector {
    let d = 1.0 + z.norm_sq();
    let d2 = d * d;
    let adj = b.adjoint_apply(z);
    let adj_sq: f64 = adj.iter().map(|a| a * a).sum();
    let bbz = b.apply(&adj);
    let mut out = z.scaled(4.0 * adj_sq / (d2 * d) - b.hs_norm_sq_plain() / d2);
    out.axpy(-2.0 / d2, &bbz);
    out
}

/// Diffusion of `psi(X)` applied to the `direction`-th U-basis vector:
/// `psi'(z)(B u_direction)`.
pub fn ito_diffusion_apply(z: &StateVector, b: &NoiseOperator, direction: usize) -> StateVector {
    psi_prime_apply(z, &b.column(direction))
}

/// A smoothed noise increment together with its tamed image.
#[derive(Debug, Clone, PartialEq)]
pub struct TamedIncrement {
    pub raw: StateVector,
    pub tamed: StateVector,
}

impl TamedIncrement {
    pub fn new(raw: StateVector) -> Self {
        let tamed = psi(&raw);
        TamedIncrement { raw, tamed }
    }
}

/// Drift and per-direction diffusion of the mild Itô representation at `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItoCoefficients {
    pub drift: StateVector,
    /// `diffusion[j] = psi'(z)(B u_j)`.
    pub diffusion: Vec<StateVector>,
}

impl ItoCoefficients {
    pub fn at(z: &StateVector, b: &NoiseOperator) -> Self {
        ItoCoefficients {
            drift: ito_drift(z, b),
            diffusion: (0..b.u_dim())
                .map(|j| ito_diffusion_apply(z, b, j))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_noise(b: f64) -> NoiseOperator {
        NoiseOperator::new(1, 1, vec![b], 0.0).unwrap()
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(&StateVector::zeros(3)).0, vec![0.0; 3]);
        let v = StateVector(vec![0.6, 0.8]);
        let t = psi(&v);
        assert!((t.norm() - 0.5).abs() < 1e-15);
        assert!((t[0] - 0.3).abs() < 1e-15);
        let v = StateVector(vec![3.0, 0.0]);
        assert!((psi(&v)[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn psi_prime_examples() {
        let u = StateVector(vec![1.0, -2.0, 0.5]);
        assert_eq!(psi_prime_apply(&StateVector::zeros(3), &u), u);
        let z = StateVector(vec![0.6, 0.8, 0.0]);
        let out = psi_prime_apply(&z, &z);
        assert!(out.norm() < 1e-15);
    }

    #[test]
    fn psi_double_prime_vanishes_at_origin() {
        let u = StateVector(vec![1.0, 2.0]);
        let v = StateVector(vec![-0.3, 0.7]);
        let out = psi_double_prime_apply(&StateVector::zeros(2), &u, &v);
        assert_eq!(out.0, vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_drift_and_diffusion() {
        let b = scalar_noise(1.0);
        let z = StateVector(vec![1.0]);
        assert!((ito_drift(&z, &b)[0] + 0.25).abs() < 1e-15);
        assert!(ito_diffusion_apply(&z, &b, 0)[0].abs() < 1e-15);
        assert_eq!(ito_drift(&StateVector::zeros(1), &b)[0], 0.0);
        assert_eq!(ito_diffusion_apply(&StateVector::zeros(1), &b, 0)[0], 1.0);
    }

    #[test]
    fn coefficients_at_origin() {
        let b = NoiseOperator::new(2, 3, vec![1.0, 0.5, 0.0, -0.2, 0.0, 2.0], 0.0).unwrap();
        let c = ItoCoefficients::at(&StateVector::zeros(2), &b);
        assert_eq!(c.drift.0, vec![0.0, 0.0]);
        for j in 0..3 {
            assert_eq!(c.diffusion[j], b.column(j));
        }
    }

    fn vec_strategy(n: usize, scale: f64) -> impl Strategy<Value = StateVector> {
        prop::collection::vec(-scale..scale, n).prop_map(StateVector)
    }

    proptest! {
        #[test]
        fn psi_is_bounded_by_half(v in vec_strategy(5, 50.0)) {
            let out = psi(&v);
            prop_assert!(out.norm() <= 0.5 + 1e-15);
            // parallel to the input
            let cross = out.dot(&v).abs() - out.norm() * v.norm();
            prop_assert!(cross.abs() <= 1e-9 * (1.0 + v.norm_sq()));
        }

        #[test]
        fn second_derivative_is_symmetric(z in vec_strategy(4, 5.0), u in vec_strategy(4, 3.0), v in vec_strategy(4, 3.0)) {
            let a = psi_double_prime_apply(&z, &u, &v);
            let b = psi_double_prime_apply(&z, &v, &u);
            prop_assert!(a.sub(&b).norm() <= 1e-14 * (1.0 + a.norm()));
        }

        #[test]
        fn first_order_taylor_remainder_is_quadratic(z in vec_strategy(3, 4.0), u in vec_strategy(3, 2.0)) {
            let base = psi(&z);
            let lin = psi_prime_apply(&z, &u);
            let mut ks = Vec::new();
            for eps in [1e-3, 1e-4] {
                let mut shifted = z.clone();
                shifted.axpy(eps, &u);
                let mut rem = psi(&shifted).sub(&base);
                rem.axpy(-eps, &lin);
                ks.push(rem.norm() / (eps * eps));
            }
            // |psi''| <= 6 ||u||^2 for every z, so the remainder constant is bounded uniformly
            let bound = 6.0 * u.norm_sq() + 1e-6;
            for k in ks {
                prop_assert!(k <= bound, "k = {k}, bound = {bound}");
            }
        }

        #[test]
        fn drift_equals_half_trace_of_second_derivative(
            z in vec_strategy(3, 4.0),
            coeffs in prop::collection::vec(-2.0f64..2.0, 12),
        ) {
            let b = NoiseOperator::new(3, 4, coeffs, 0.0).unwrap();
            let drift = ito_drift(&z, &b);
            let mut trace = StateVector::zeros(3);
            for j in 0..4 {
                let col = b.column(j);
                trace.axpy(0.5, &psi_double_prime_apply(&z, &col, &col));
            }
            let scale = drift.norm().max(trace.norm()).max(1e-300);
            prop_assert!(drift.sub(&trace).norm() <= 1e-12 * scale.max(1e-3));
        }
    }
}
