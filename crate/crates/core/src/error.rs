use alloc::string::String;

use crate::quadrature::QuadError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("arity mismatch: expected {expected} arguments, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("index {index} out of range for {len} cells")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("design infeasible: {0}")]
    DesignInfeasible(String),
    #[error("theory undefined: {0}")]
    TheoryUndefined(String),
    #[error("quadrature failed: {0}")]
    Quadrature(QuadError),
    #[error("estimation failed: {0}")]
    EstimationFailure(String),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::InvalidInput(_) => "invalid-input",
            Error::ArityMismatch { .. } => "arity-mismatch",
            Error::IndexOutOfRange { .. } => "index-out-of-range",
            Error::DesignInfeasible(_) => "design-infeasible",
            Error::TheoryUndefined(_) => "theory-undefined",
            Error::Quadrature(_) => "quadrature",
            Error::EstimationFailure(_) => "estimation-failure",
            Error::InternalInconsistency(_) => "internal-inconsistency",
        }
    }
}

impl From<QuadError> for Error {
    fn from(e: QuadError) -> Self {
        Error::Quadrature(e)
    }
}
