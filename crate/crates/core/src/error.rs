use thiserror::Error;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid length: {0}")]
    InvalidLength(String),
    #[error("non-finite input: {0}")]
    NumericInput(String),
    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite (pivot {pivot:.3e} at index {index})")]
    Indefinite { index: usize, pivot: f64 },
    #[error("matrix is rank deficient (singular value ratio {0:.3e})")]
    RankDeficient(f64),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("ill-conditioned system: condition number {0:.3e}")]
    IllConditioned(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("value outside the domain: {0}")]
    Domain(String),
    #[error("unbounded update: {0}")]
    UnboundedUpdate(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("decomposition failed to converge: {0}")]
    NoConvergence(String),
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error("fixture format error: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
