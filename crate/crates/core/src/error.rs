use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}` = {value}: must lie in {constraint}")]
    InvalidParameter {
        field: &'static str,
        value: f64,
        constraint: String,
    },

    #[error("point {value} lies outside [0, {horizon}]")]
    OutOfRange { value: f64, horizon: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("objects live on different grids")]
    GridMismatch,

    #[error("partition point {value} is not a grid node")]
    Unaligned { value: f64 },

    #[error("integrand is not integrable: endpoint exponent {exponent} <= -1")]
    NonIntegrable { exponent: f64 },

    #[error("quadrature did not reach relative tolerance {tolerance:e} (estimate {estimate:e}) at the cell cap")]
    QuadratureNotConverged { tolerance: f64, estimate: f64 },

    #[error("size cap exceeded: {what} needs {requested} entries, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        requested: u128,
        cap: u128,
    },

    #[error("covariance matrix is not numerically positive definite (pivot {pivot} at row {row})")]
    Factorization { row: usize, pivot: f64 },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn param(field: &'static str, value: f64, constraint: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            value,
            constraint: constraint.into(),
        }
    }
}
