//! Experiment runner: TOML configs in, CSV rows and a JSON summary out.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use experiments::{run_bounds_audit, run_convergence_study, run_selftest};
pub use report::{Report, Row, Verdict};
