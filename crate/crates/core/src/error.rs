use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed data handed to an operation (shape mismatch, non-finite
    /// values, inconsistent lengths).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A parameter combination that can never work (stride not dividing the
    /// image, undersampling factor out of range, bad solver settings).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric kernel failed (SVD on non-finite data, root finder fed
    /// garbage).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iterate violates a constraint set (non-unitary transform, energy
    /// bound exceeded, invalid cluster labels). The objective would be +inf;
    /// we report instead of returning a number.
    #[error("infeasible iterate: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
