use thiserror::Error;

use crate::svm::SvmFit;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum AqkaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("all allocation weights are zero")]
    DegenerateWeights,

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("solver did not converge after {iterations} iterations (violation {violation:.3e})")]
    ConvergenceFailure {
        iterations: usize,
        violation: f64,
        best: Box<SvmFit>,
    },

    #[error("regularity assumption violated: {0}")]
    RegularityViolation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, AqkaError>;

impl AqkaError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        AqkaError::InvalidInput(msg.into())
    }
}
