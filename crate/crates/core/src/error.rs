use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sample {id}: non-finite component at index {index}")]
    NonFinite { id: String, index: usize },

    #[error("sample {id}: zero-norm vector")]
    ZeroNorm { id: String },

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    PayloadSizeMismatch { expected: usize, found: usize },

    #[error("missing label column {0:?}")]
    MissingLabel(String),

    #[error("labels outside the declared categories for {key:?}: {labels:?}")]
    UnknownLabels { key: String, labels: Vec<String> },

    #[error("group {0:?} has no samples")]
    EmptyGroup(String),

    #[error("row {id}: unknown class {value:?}")]
    UnknownClass { id: String, value: String },

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("empty stratum: expression {expression:?}, group {group:?}")]
    EmptyStratum { expression: String, group: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("statistical module: {0}")]
    Statistics(String),

    #[error("findings mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Statistics(_) => 2,
            _ => 1,
        }
    }
}
