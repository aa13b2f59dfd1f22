//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A run configuration is inconsistent or incomplete.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// No width in the legal range fits under the parameter budget.
    #[error("parameter budget infeasible: width-1 model has {min_count} parameters, target is {target}")]
    BudgetInfeasible { min_count: u64, target: u64 },

    /// The trained teacher did not clear the configured accuracy floor.
    #[error("teacher validation accuracy {accuracy:.4} is below the required floor {floor:.4}")]
    TeacherQuality { accuracy: f64, floor: f64 },

    /// Cached teacher logits do not belong to the dataset in use.
    #[error("teacher logits file does not match the dataset (hash mismatch)")]
    LogitsMismatch,

    /// Filesystem failure, annotated with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// A trial log line failed to parse.
    #[error("{path}:{line}: bad trial record: {message}")]
    LogParse {
        path: String,
        line: usize,
        message: String,
    },

    /// A binary artifact (checkpoint, logits file) is malformed.
    #[error("corrupt file {path}: {message}")]
    Format { path: String, message: String },

    /// A bug: an internal invariant was violated.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
