use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by fitting, extraction, sampling and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("field has no trainable parameters")]
    NoParameters,

    #[error("no zero crossing of the field inside the domain")]
    EmptyLevelSet,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("gradient norm vanished at {0}")]
    VanishingGradient(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {component} at iteration {iteration}")]
    NonFinite {
        component: &'static str,
        iteration: usize,
    },

    #[error("{what} diverged at step {step}")]
    Diverged { what: &'static str, step: usize },

    #[error("missing sample set for {0}")]
    MissingSamples(&'static str),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(detail: impl Into<String>) -> Self {
        Error::InvalidConfig(detail.into())
    }
}
