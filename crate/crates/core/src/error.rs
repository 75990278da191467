use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad class of a failure, used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("too few exceedances: found {found}, need at least {required}")]
    TooFewExceedances { found: usize, required: usize },

    #[error("sample too small: {found} values, need at least {required}")]
    SampleTooSmall { found: usize, required: usize },

    #[error("value {value} lies beyond the upper endpoint {endpoint} of the fitted tail")]
    BeyondEndpoint { value: f64, endpoint: f64 },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("constraint system is rank deficient")]
    SingularConstraint,

    #[error("optimizer did not converge after {iterations} iterations: {message}")]
    NonConvergence {
        iterations: usize,
        message: String,
        trace: Vec<f64>,
    },

    #[error("point {index} at ({x}, {y}) lies outside the mesh")]
    OutsideMesh { index: usize, x: f64, y: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::DimensionMismatch(_) => ErrorClass::Config,
            Error::NotPositiveDefinite { .. }
            | Error::SingularConstraint
            | Error::NonConvergence { .. }
            | Error::BeyondEndpoint { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
