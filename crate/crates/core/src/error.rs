use alloc::string::String;

/// Errors raised by the orbit-recovery routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid group order {0}")]
    InvalidOrder(usize),
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("group of order {order} exceeds the cap of {cap} elements")]
    GroupTooLarge { order: usize, cap: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} exceeds its cap ({size} > {cap})")]
    CapExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("degenerate orbit: minimum pairwise distance {0:e}")]
    DegenerateOrbit(f64),
    #[error("matrix is singular or not positive definite")]
    Singular,
    #[error("point outside the chart domain: {0}")]
    OutOfDomain(String),
    #[error("closed form unavailable: {0}")]
    ClosedFormUnavailable(String),
    #[error("iterate norm {norm:e} exceeds the divergence limit {limit:e}")]
    Diverged { norm: f64, limit: f64 },
    #[error("certification failed: {0}")]
    Certification(String),
}

pub type Result<T> = core::result::Result<T, Error>;
