use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("binary format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("class {label:+} has total count {available}, cannot draw {requested}")]
    InsufficientClassMass {
        label: i8,
        available: u64,
        requested: u64,
    },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),

    #[error("statistic undefined: {0}")]
    UndefinedStatistic(&'static str),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("certificate does not match graph: {0}")]
    IndexMismatch(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("deadline exceeded")]
    Timeout,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
