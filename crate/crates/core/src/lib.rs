//! Tamed-truncated exponential Euler approximations of stochastic
//! convolutions `O_t = ∫_0^t e^{(t-s)A} B dW_s` for diagonal negative operators
//! `A`, with exact coupled sampling, a mild Itô representation of the scheme,
//! a priori bounds and Monte Carlo estimators.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod grid;
pub mod linalg;
pub mod mc;
pub mod noise;
pub mod oracles;
pub mod representation;
pub mod rng;
pub mod scheme;
pub mod spectral;
pub mod taming;

pub use bounds::BoundInputs;
pub use error::{Error, Result};
pub use estimators::{
    fit_rate, McEstimate, NodeAccumulator, NodePair, NodeSamples, NodeStatistics, RateFit,
};
pub use grid::{uniform_grid, GridSpec, TimeGrid};
pub use noise::{IncrementCovariance, NoiseOperator, NoiseSpec};
pub use rng::{derive_seed, path_rng, PathRng};
pub use scheme::{
    simulate_coupled, CoupledSimulator, CoupledTrajectory, NodeView, SchemeState, TruncationPolicy,
};
pub use spectral::{OperatorSpec, ProjectionIndex, SpectralOperator, StateVector};
