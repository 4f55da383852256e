use thiserror::Error;

/// Errors raised while building or solving a discretization.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("basis construction failed for {space}: {reason}")]
    BasisConstruction { space: String, reason: String },

    #[error("patch matrix at vertex {vertex} is not positive definite (pivot {pivot} = {value:e})")]
    PatchNotSpd { vertex: usize, pivot: usize, value: f64 },

    #[error("coarse space construction failed: {0}")]
    CoarseSpace(String),

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("CG breakdown at iteration {iteration}: {reason}")]
    Breakdown { iteration: usize, reason: String },

    #[error("operator is not symmetric: relative defect {defect:e}")]
    NotSymmetric { defect: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
