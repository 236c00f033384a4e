use thiserror::Error;

/// Errors raised by the moment, tensor and sampling routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square: {rows} rows, row {row} has {len} entries")]
    NotSquare { rows: usize, row: usize, len: usize },

    #[error("declared dimension {declared} does not match data dimension {actual}")]
    DimensionDeclaration { declared: usize, actual: usize },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e} is below tolerance {tolerance:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("index {index} out of range 1..={dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("expected {expected} items, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("dense tensor with {dim}^{order} entries exceeds the limit of {limit}")]
    TensorTooLarge { order: usize, dim: usize, limit: u64 },

    #[error("non-finite value in input")]
    NonFinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {required} samples, got {actual}")]
    InsufficientSamples { required: u64, actual: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
