//! Consistency of the scheme with its mild Itô representation.
//!
//! On each coarse step `[t_m, t_{m+1}]` the tamed increment `ψ(X_{t_{m+1}})`
//! equals `∫ ψ'(X_u) B dW_u + ∫ drift(X_u) du` with `X` restarted at zero at
//! `t_m`. Discretizing both integrals with `S` substeps on the same Brownian
//! path gives the representation
//!
//! ```text
//! R_{t_{m+1}} = e^{h_m A} (R_{t_m} + χ_{t_m} Σ_j [ψ'(X_j)(B δW_j) + drift(X_j) δ]),
//! ```
//!
//! whose distance to the scheme should vanish as `S` grows.

use serde::{Deserialize, Serialize};

use crate::error::{range_error, Result};
use crate::estimators::{sup_root_mean, McEstimate, NodeSamples};
use crate::mc::collect_multi_samples;
use crate::noise::{coarsen_increments, fine_increments, NoiseOperator};
use crate::rng::path_rng;
use crate::scheme::{CoupledSimulator, SchemeState};
use crate::spectral::StateVector;
use crate::taming::{ito_drift, psi, psi_prime_apply};

/// Grid sup of `(E ||O^{θ,I,J}_t - R^S_t||_H²)^{1/2}` for one substep count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentationGap {
    pub substeps: usize,
    pub gap: McEstimate,
}

/// Left-point Itô sum of `ψ(X_h) - ψ(X_0)` for `X_0 = 0`, `X_{j+1} = X_j + B δW_j`.
pub fn ito_increment_sum(b: &NoiseOperator, increments: &[Vec<f64>], delta: f64) -> StateVector {
    let mut x = StateVector::zeros(b.h_dim());
    let mut acc = StateVector::zeros(b.h_dim());
    for dw in increments {
        let bdw = b.apply(dw);
        acc.axpy(1.0, &psi_prime_apply(&x, &bdw));
        acc.axpy(delta, &ito_drift(&x, b));
        x.axpy(1.0, &bdw);
    }
    acc
}

/// Per-node squared distances between the scheme and its representation for
/// every substep count in `substeps`, on one path of fine noise.
///
/// Noise is drawn at the largest substep count and summed for the coarser ones.
pub fn representation_path(
    sim: &CoupledSimulator,
    substeps: &[usize],
    seed: u64,
    index: u64,
) -> Vec<Vec<f64>> {
    let op = sim.operator();
    let b = sim.scheme_noise();
    let grid = sim.grid();
    let steps = grid.steps();
    let finest = *substeps.iter().max().expect("nonempty substep list");
    let mut rng = path_rng(seed, index);
    let realized = sim.policy().realize(&mut rng);

    let dim = op.dim();
    let mut state = SchemeState::initial(dim);
    let mut reps = vec![StateVector::zeros(dim); substeps.len()];
    let mut out = vec![vec![0.0; steps + 1]; substeps.len()];
    for m in 0..steps {
        let h = grid.gap(m);
        let decay = op.semigroup_factors(h).expect("positive gap");
        let fine = fine_increments(&mut rng, b.u_dim(), h, finest);
        let chi = realized.chi(&state, steps);

        let total = coarsen_increments(&fine, finest).pop().expect("one block");
        let mut inner = state.value.clone();
        inner.axpy(chi, &psi(&b.apply(&total)));
        for (o, (v, d)) in state.value.iter_mut().zip(inner.iter().zip(&decay)) {
            *o = d * v;
        }
        state.node = m + 1;
        state.t = grid.node(m + 1);

        for (k, &s) in substeps.iter().enumerate() {
            let incs = coarsen_increments(&fine, finest / s);
            let euler = ito_increment_sum(b, &incs, h / s as f64);
            let r = &mut reps[k];
            r.axpy(chi, &euler);
            for (x, d) in r.iter_mut().zip(&decay) {
                *x *= d;
            }
            out[k][m + 1] = state.value.sub(r).norm_sq();
        }
    }
    out
}

/// L² representation gap for each substep count, over `paths` paths.
pub fn representation_gaps(
    sim: &CoupledSimulator,
    substeps: &[usize],
    paths: usize,
    seed: u64,
) -> Result<Vec<RepresentationGap>> {
    let finest = *substeps
        .iter()
        .max()
        .ok_or_else(|| range_error("substeps", 0.0, "need at least one substep count"))?;
    for &s in substeps {
        if s == 0 || finest % s != 0 {
            return Err(range_error(
                "substeps",
                s as f64,
                "every substep count must divide the largest one",
            ));
        }
    }
    let nodes = sim.grid().len();
    let widths = vec![nodes; substeps.len()];
    let samples: Vec<NodeSamples> = collect_multi_samples(paths, &widths, |i| {
        representation_path(sim, substeps, seed, i)
    });
    substeps
        .iter()
        .zip(&samples)
        .map(|(&s, smp)| {
            Ok(RepresentationGap {
                substeps: s,
                gap: sup_root_mean(smp, 2.0, seed)?,
            })
        })
        .collect()
}
