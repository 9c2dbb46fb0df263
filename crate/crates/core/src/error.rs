use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("no RNA residues found in {0}")]
    NoRnaResidues(String),
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("need at least 3 points for superposition, got {0}")]
    TooFewPoints(usize),
    #[error("test id {0:?} not present in the filtered corpus")]
    UnknownTestId(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("states disagree: {0}")]
    MismatchedStates(String),
    #[error("non-finite gradient for parameter {param} at step {step}")]
    NonFiniteGradient { param: String, step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error stems from bad user input rather than a fault in
    /// the pipeline itself.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Tensor(_) | Error::NonFiniteGradient { .. } => false,
            Error::Io(e) => matches!(
                e.kind(),
                std::io::ErrorKind::NotFound | std::io::ErrorKind::InvalidInput
            ),
            _ => true,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
