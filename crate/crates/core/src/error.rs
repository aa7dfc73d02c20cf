use thiserror::Error;

use crate::polyalg::VarId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("variable x{0} has no assigned value")]
    MissingAssignment(VarId),

    #[error("monomial {0} is outside the moment basis")]
    OutOfBasis(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("data is not compatible with the nonnegative regime: {0}")]
    InvalidRegime(String),

    #[error("relaxation order {given} is below the admissible minimum {min}")]
    OrderTooSmall { given: usize, min: usize },

    #[error("dense relaxation needs {needed} moments, cap is {cap}")]
    SizeCapExceeded { needed: usize, cap: usize },

    #[error("symmetric eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("malformed SDP problem: {0}")]
    MalformedProblem(String),

    #[error("step size {eta} exceeds the admissible bound {eta_max}")]
    StepTooLarge { eta: f64, eta_max: f64 },

    #[error("{method} did not converge within {iterations} iterations")]
    MaxIterReached { method: &'static str, iterations: usize },

    #[error("ROC rates undefined: {0}")]
    DegenerateTruth(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
