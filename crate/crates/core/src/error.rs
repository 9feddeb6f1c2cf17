use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the estimators, quadratures and geometry routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("rejected descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("matrix is not symmetric positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is singular or ill-conditioned (condition number {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("non-finite value {value} encountered in {context} at sample {sample:?}")]
    NonFinite {
        context: &'static str,
        value: f64,
        sample: Vec<f64>,
    },

    #[error("negative integrand {value:e} at sample {sample:?}: subgradient oracle violates the subgradient inequality")]
    NegativeIntegrand { value: f64, sample: Vec<f64> },

    #[error("no Hessian density available at the base point; run hessian_by_polarization and pass the estimate")]
    MissingHessian,

    #[error("direction is not a unit vector (norm {norm})")]
    NonUnitDirection { norm: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integral is not finite: {0}")]
    NonIntegrable(String),

    #[error("test function has no bounded support box")]
    UnboundedSupport,

    #[error("need at least {needed} significant points, found {found}")]
    InsufficientPoints { needed: usize, found: usize },

    #[error("geometry bug: {0}")]
    Geometry(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
