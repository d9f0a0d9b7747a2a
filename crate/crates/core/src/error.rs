use thiserror::Error;

/// Errors raised by the surrogate, design and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("range parameter {index} must be positive, got {value}")]
    NonPositiveRange { index: usize, value: f64 },

    #[error("matrix is not numerically positive definite")]
    NotPositiveDefinite,

    #[error("degenerate extension: Schur complement {0} is not positive")]
    DegenerateExtension(f64),

    #[error("point {0:?} lies outside the design bounds")]
    OutOfBounds(Vec<f64>),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("need at least {needed} posterior samples, have {have}")]
    TooFewSamples { needed: usize, have: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("empty data set")]
    EmptyData,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
