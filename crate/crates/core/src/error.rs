use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("{which} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { which: &'static str, asymmetry: f64 },
    #[error("form matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("mass matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    MassNotPd { min_eigenvalue: f64 },
    #[error("{which} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite {
        which: &'static str,
        min_eigenvalue: f64,
    },
    #[error("dimension {dim} exceeds the dense limit {limit}")]
    SizeLimit { dim: usize, limit: usize },
    #[error("trace map has rank {rank}, expected full row rank {expected}")]
    RankDeficient { rank: usize, expected: usize },
    #[error("restriction index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("restriction index {index} appears more than once")]
    DuplicateIndex { index: usize },
    #[error("shift parameter must be {requirement}, got {lambda}")]
    InvalidLambda {
        lambda: f64,
        requirement: &'static str,
    },
    #[error("kernel block K^T B K is numerically singular")]
    SingularKernelBlock,
    #[error("saddle-point (KKT) matrix is numerically singular")]
    SaddleSingular,
    #[error("the Schur path needs a coordinate-restriction trace map")]
    PathUnavailable,
    #[error("matrix is numerically singular: {context}")]
    Singular { context: &'static str },
    #[error("harmonic space and ker J do not form a direct sum (K^T A K singular)")]
    NoDirectSum,
    #[error("Dirichlet part L_D is not surjective (K^T A K singular)")]
    NotSurjective,
    #[error("lattice tests need a diagonal mass matrix")]
    NonDiagonalMass,
    #[error("lattice tests need a diagonal auxiliary weight matrix")]
    NonDiagonalWeight,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("no sequence index meets eps_{step} = {eps:e} at lambda = {lambda:e} (not found within schedule)")]
    ScheduleExhausted { step: usize, lambda: f64, eps: f64 },
    #[error("invalid grid geometry: {0}")]
    GeometryInvalid(String),
    #[error("invalid form sequence: {0}")]
    InvalidSequence(String),
}

impl Error {
    /// Whether the error rejects the input, as opposed to a numerical breakdown on valid input.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::SingularKernelBlock
                | Error::SaddleSingular
                | Error::Singular { .. }
                | Error::NoDirectSum
                | Error::NotSurjective
                | Error::ScheduleExhausted { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
