use alloc::string::String;

/// Errors produced by the core routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} is {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("symmetric eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("root is not bracketed: f({lo}) = {f_lo:e}, f({hi}) = {f_hi:e}")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix has a negative eigenvalue {value:e} beyond tolerance")]
    NotPositiveSemidefinite { value: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
    #[error("characteristic-function inversion failed: {0}")]
    IntegrationFailure(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("duplicate atom at position {0}")]
    DuplicateAtoms(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
