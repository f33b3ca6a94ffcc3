use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset needs at least two samples, got {0}")]
    SingletonDataset(usize),
    #[error("bandwidth is zero: all samples coincide")]
    DegenerateBandwidth,
    #[error("bandwidth must be positive, got {0}")]
    NonpositiveBandwidth(f64),
    #[error("dataset has no `label` column")]
    MissingLabels,
    #[error("dataset has no `property` column")]
    MissingProperties,
    #[error("fingerprint {row} has no set bits")]
    EmptyFingerprint { row: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("gram matrix is indefinite: pivot {pivot:e} at index {index}")]
    IndefiniteGram { pivot: f64, index: usize },
    #[error("gram matrix is not symmetric at ({row}, {col})")]
    AsymmetricGram { row: usize, col: usize },
    #[error("sinkhorn precision failure at epsilon {epsilon:e}: {reason}")]
    PrecisionFailure { epsilon: f64, reason: String },
    #[error("no stable epsilon: initial value {0:e} already fails")]
    NoStableEpsilon(f64),
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("{0}")]
    Domain(String),
    #[error("need {needed} neighbours, only {available} available")]
    InsufficientNeighbors { needed: usize, available: usize },
    #[error("standard deviation needs at least two runs, got {0}")]
    InsufficientRuns(usize),
    #[error("{0}")]
    Dimension(String),
    #[error("invalid config field `{field}`: {message}")]
    Config { field: &'static str, message: String },
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Numerical failures are distinguished from input/validation errors
    /// (the CLI maps them to different exit codes).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::PrecisionFailure { .. } | Error::NoStableEpsilon(_)
        )
    }

    pub(crate) fn shape(what: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
