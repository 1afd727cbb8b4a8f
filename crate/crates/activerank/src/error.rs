//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the geometry kernel, oracles, rankers and IO layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("objects {i} and {j} coincide; bisector is undefined")]
    DegeneratePair { i: usize, j: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("reference is exactly equidistant from objects {i} and {j}")]
    EquidistantTie { i: usize, j: usize },

    #[error("feasibility solve failed to converge with {constraints} constraints")]
    NumericalFailure { constraints: usize },

    #[error("query ({i},{j}) is ambiguous; its label cannot be imputed")]
    AmbiguousQuery { i: usize, j: usize },

    #[error(
        "constraint set has empty interior ({constraints} constraints); \
         labels are mutually inconsistent"
    )]
    InconsistentConstraints { constraints: usize },

    #[error("similarity matrix is not symmetric at ({i},{j}): {a} vs {b}")]
    AsymmetricMatrix { i: usize, j: usize, a: f64, b: f64 },

    #[error("interactive session aborted after {answered} answers")]
    SessionAborted { answered: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
