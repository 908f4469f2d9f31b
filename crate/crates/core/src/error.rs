use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("particle deprivation: no particle is consistent with action {action} and observation {observation}")]
    ParticleDeprivation { action: usize, observation: usize },

    #[error("no action has been visited at the root (planning budget was zero)")]
    NoVisitedAction,

    #[error("trajectory origin mismatch: {0}")]
    WrongOrigin(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{what} exceeds enumeration limits: {detail}")]
    EnumerationLimit { what: &'static str, detail: String },

    #[error("malformed record file {path}: line {line}: {reason}")]
    Format {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
