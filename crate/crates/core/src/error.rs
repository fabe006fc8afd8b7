use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("missing column \"{0}\"")]
    MissingColumn(String),
    #[error("row {row}, column \"{column}\": cannot parse {value:?} as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: domain value {value:?} is not one of the declared domain names")]
    UnknownDomain { row: usize, value: String },
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of inputs or files.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::Optimization(_) | Error::ZeroVariance(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
