use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid size N={n} outside the supported range [{min}, {max}] for {kind}")]
    GridSize {
        kind: &'static str,
        n: usize,
        min: usize,
        max: usize,
    },

    #[error("domain radius must be positive and finite, got {0}")]
    Radius(f64),

    #[error("fractional order s={0} outside [0.05, 0.95]")]
    OrderOutOfRange(f64),

    #[error("dimension n={0} not supported (expected 1, 2 or 3)")]
    Dimension(usize),

    #[error("coupling coefficient a={0} must be nonnegative")]
    NegativeCoupling(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),
}
