use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },
    #[error("zero or negative diagonal entry at index {index}")]
    NonPositiveDiagonal { index: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("rectangle family is empty")]
    EmptyFamily,
    #[error("order-{order} tensor refused for p = {p} (limit {limit})")]
    TensorTooLarge {
        order: usize,
        p: usize,
        limit: usize,
    },
    #[error("only {usable} points above the noise floor, need at least 3")]
    NoiseFloor { usable: usize },
    #[error("enumeration oracle limited to k <= {limit}, got {k}")]
    OracleTooLarge { k: usize, limit: usize },
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
