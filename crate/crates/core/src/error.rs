use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point:?} lies outside the domain cube of half-width {halfwidth}")]
    DomainViolation { point: Vec<f64>, halfwidth: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown test function `{0}`")]
    UnknownFunction(String),

    #[error("unsupported analytic body `{0}`")]
    UnsupportedBody(String),

    #[error("linear part is not invertible (relative determinant {0:e})")]
    Singular(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("sample covariance is degenerate (all points coincide)")]
    DegenerateCovariance,

    #[error("no seed points; re-run the warm start")]
    NoSeeds,

    #[error(
        "interior point ({x:?}, {y}) tested OUTSIDE the body; the initial ceiling is too small"
    )]
    NoInteriorPoint { x: Vec<f64>, y: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
