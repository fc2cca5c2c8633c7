use thiserror::Error;

/// Errors raised while building or differentiating a graph.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?} for data of length {len}")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("domain error in {op}: input {value} is outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("matrix is singular")]
    Singular,
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("non-finite gradient for parameter `{0}`")]
    NanGradient(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

pub type Result<T> = std::result::Result<T, AdError>;
