use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-numeric value {value:?} in column {column:?} (row {row})")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown label column {0:?}")]
    UnknownColumn(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset has no labels")]
    MissingLabels,

    #[error("dataset {0:?} must be normalized first")]
    NotNormalized(String),

    #[error("constraint index {index} out of range for {n} instances")]
    ConstraintIndex { index: usize, n: usize },

    #[error("infeasible constraints: instance {instance} has no cluster satisfying its must/cannot links")]
    Infeasible { instance: usize },

    #[error("instance {0} has zero affinity to every other instance")]
    IsolatedPoint(usize),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
