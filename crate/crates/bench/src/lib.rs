//! Shared fixtures for the benchmarks.

use stoconv_core::{
    uniform_grid, CoupledSimulator, NoiseOperator, ProjectionIndex, SpectralOperator, TimeGrid,
    TruncationPolicy,
};

/// Dirichlet Laplacian on `modes` modes with diagonal noise `b_n = n^{-2}`.
pub fn heat_model(modes: usize) -> (SpectralOperator, NoiseOperator) {
    let op = SpectralOperator::dirichlet_laplacian(modes, 1.0).expect("valid operator");
    let b = NoiseOperator::power_decay(modes, modes, 1.0, 2.0, 0.0).expect("valid noise");
    (op, b)
}

pub fn heat_grid(steps: usize) -> TimeGrid {
    uniform_grid(1.0, steps).expect("valid grid")
}

/// Full-projection simulator with the identity truncation policy.
pub fn heat_simulator(
    op: &SpectralOperator,
    b: &NoiseOperator,
    grid: &TimeGrid,
) -> CoupledSimulator {
    CoupledSimulator::new(
        op,
        b,
        ProjectionIndex::all(op.dim()),
        ProjectionIndex::all(b.u_dim()),
        grid,
        TruncationPolicy::Identity,
    )
    .expect("consistent dimensions")
}
