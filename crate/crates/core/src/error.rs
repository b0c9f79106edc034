use std::path::PathBuf;

use thiserror::Error;

use crate::data::SampleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("integrity error: duplicate sample id {0}")]
    DuplicateId(SampleId),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("degenerate row: sample {0} has (near-)zero L2 norm")]
    DegenerateRow(SampleId),

    #[error("embedding format error: {0}")]
    Format(String),

    #[error("truncated embedding file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("budget exceeded: charging {requested} with {spent} of {total} already spent")]
    BudgetExceeded {
        requested: usize,
        spent: usize,
        total: usize,
    },

    #[error("pool exhausted: no unannotated samples remain")]
    PoolExhausted,

    #[error("singular covariance for benchmark '{0}' even after regularization")]
    SingularModel(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal invariant breached: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the environment (missing files, permissions) rather than
    /// by the content of the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
