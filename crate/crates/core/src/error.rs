use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("measurement matrix has numerical rank {rank}, need full column rank {n}")]
    RankDeficient { rank: usize, n: usize },

    #[error("invalid selection vector: {0}")]
    InvalidSelection(String),

    #[error("cannot stack a relaxed selection with a boolean one")]
    MixedKinds,

    #[error("information matrix is not positive definite (pivot {index} = {pivot:e})")]
    SingularInformation { index: usize, pivot: f64 },

    #[error("relative gap undefined: |upper| = {upper:e} is below the reference guard")]
    DegenerateReference { upper: f64 },

    #[error("z[{index}] = {value} is not strictly inside (0, 1)")]
    BoundaryViolation { index: usize, value: f64 },

    #[error("barrier method did not converge after {outer} outer and {inner} Newton iterations")]
    NonConvergence { outer: usize, inner: usize },

    #[error("Newton KKT system is numerically singular")]
    SingularKkt,

    #[error("solve deadline exceeded")]
    DeadlineExceeded,

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("row {index} of the measurement matrix is zero")]
    ZeroRow { index: usize },

    #[error("requested {requested} shared vectors but only {available} eigenpairs exist")]
    TooManyVectors { requested: usize, available: usize },

    #[error("malformed message: {0}")]
    Message(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularInformation { .. }
                | Error::DegenerateReference { .. }
                | Error::BoundaryViolation { .. }
                | Error::NonConvergence { .. }
                | Error::SingularKkt
                | Error::DeadlineExceeded
        )
    }
}
