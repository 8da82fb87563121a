use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid spectral operator: {0}")]
    InvalidOperator(String),

    #[error("invalid noise operator: {0}")]
    InvalidNoise(String),

    #[error("parameter `{name}` = {value} out of range: {reason}")]
    ParameterRange {
        name: &'static str,
        value: f64,
        reason: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("covariance matrix is not positive semidefinite (pivot {pivot:e} at index {index}, after jitter)")]
    NotPositiveSemidefinite { index: usize, pivot: f64 },

    #[error("estimator needs at least one replication")]
    EmptyBatch,

    #[error("rate fit: {0}")]
    InvalidFit(String),

    #[error("failed to read matrix file: {0}")]
    MatrixFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn range_error(name: &'static str, value: f64, reason: impl Into<String>) -> Error {
    Error::ParameterRange {
        name,
        value,
        reason: reason.into(),
    }
}
