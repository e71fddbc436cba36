use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing outcome column '{0}'")]
    MissingOutcome(String),
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("dataset has no rows")]
    Empty,
    #[error("too few rows: need at least {needed}, have {have}")]
    TooFewRows { needed: usize, have: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("coordinate descent did not converge after {iterations} sweeps (max change {max_change:.3e})")]
    NotConverged {
        iterations: usize,
        max_change: f64,
        /// Last iterate on the standardized scale: intercept first, then coefficients.
        last: Vec<f64>,
    },
}

impl Error {
    /// Short machine-readable tag, used in CLI error records and iteration logs.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Config(_) => "config",
            Error::MissingOutcome(_) => "missing_outcome",
            Error::MissingColumn(_) => "missing_column",
            Error::Empty => "empty",
            Error::TooFewRows { .. } => "too_few_rows",
            Error::InvalidData(_) => "invalid_data",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::NotConverged { .. } => "not_converged",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
