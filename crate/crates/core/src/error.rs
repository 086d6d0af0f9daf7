use thiserror::Error;

use crate::conic::SolveStatus;
use crate::validate::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {}", summarize(.0))]
    Invalid(Vec<Violation>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance is not positive semidefinite (pivot {pivot:e} at index {index})")]
    NotPsd { index: usize, pivot: f64 },

    #[error("backend `{backend}` does not support cone {cone}")]
    Capability { backend: String, cone: String },

    /// The solver did not return an optimal point. `program` holds the serialized
    /// program text for offline debugging.
    #[error("solver finished with status {status:?}")]
    Solver {
        status: SolveStatus,
        program: Option<Box<String>>,
    },

    #[error("failed to parse conic program at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(v: &[Violation]) -> String {
    v.iter().map(|x| x.message.as_str()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
