use thiserror::Error;

/// Errors raised across the discrimination toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("operator is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("operator has no support (zero operator)")]
    ZeroOperator,

    #[error("density matrix trace is {0}, expected 1")]
    InvalidTrace(f64),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid frequencies in row {row}: {reason}")]
    InvalidFrequencies { row: usize, reason: String },

    #[error("degenerate likelihood at iteration {iteration}: {detail}")]
    DegenerateLikelihood { iteration: usize, detail: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unsupported dimension {0} (qubit only)")]
    UnsupportedDimension(usize),

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
