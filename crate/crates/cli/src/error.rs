use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write report: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] stoconv_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;
