use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared across the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument: out-of-domain parameter or malformed input.
    #[error("domain error: {0}")]
    Domain(String),

    /// Too few observations for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Factorization or solve failure (rank deficiency, non-PSD matrix).
    #[error("linear algebra error: {0}")]
    LinearAlgebra(String),

    /// Numerical breakdown (overflow, negative computed variance, ...).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Importance weights are all zero; resampling is undefined.
    #[error("degenerate importance weights: all log weights are -inf")]
    DegenerateWeights,

    /// An iterative fit failed to converge.
    #[error("fit error: {0}")]
    Fit(String),
}
