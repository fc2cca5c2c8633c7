use std::path::PathBuf;

use profiti_autodiff::AdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProfitiError {
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("series `{id}`: {message}")]
    InvalidSeries { id: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value in block {block} ({stage})")]
    NonFinite { block: usize, stage: &'static str },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("series `{0}` has no answers")]
    MissingAnswers(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ProfitiError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ProfitiError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerics rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            ProfitiError::NonFinite { .. }
                | ProfitiError::Diverged(_)
                | ProfitiError::Autodiff(
                    AdError::NonFinite { .. }
                        | AdError::NanGradient(_)
                        | AdError::Singular
                        | AdError::NoConvergence(_)
                        | AdError::Domain { .. }
                )
        )
    }
}

pub type Result<T> = std::result::Result<T, ProfitiError>;
