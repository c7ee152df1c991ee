use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("non-finite input to {op}")]
    NonFinite { op: &'static str },

    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("no ss-edge between sentences {0} and {1}")]
    NoEdge(usize, usize),

    #[error("value {value} for `{what}` outside [{lo}, {hi}]")]
    Range {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("size error: {0}")]
    Size(String),

    #[error("line {line}: field `{field}`: {reason}")]
    Parse {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at {phase} epoch {epoch} step {step}")]
    NonFiniteLoss {
        phase: String,
        epoch: usize,
        step: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
