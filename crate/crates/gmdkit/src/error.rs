use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A dimension argument is out of range (too small, overflowing, or
    /// above a hard cap for dense computation).
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    /// Inner dimensions of an operation do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix required to be positive semi-definite failed the check.
    #[error("matrix is not positive semi-definite: {0}")]
    NotPositiveSemiDefinite(String),

    /// An invalid parameter value (negative penalty, |rho| >= 1, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// NaN/Inf detected or an iteration diverged.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Variance proportions are undefined because the total norm is zero.
    #[error("variance is undefined: ||X||_Q,R = 0")]
    UndefinedVariance,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file (CSV, Matrix Market, binary, or JSON).
    #[error("parse error: {0}")]
    Parse(String),
}
