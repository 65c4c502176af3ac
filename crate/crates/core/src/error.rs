use std::path::PathBuf;

use thiserror::Error;

use crate::losses::LossBreakdown;

pub type Result<T, E = CaeError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CaeError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op}: value outside the domain ({detail})")]
    Domain { op: &'static str, detail: String },

    #[error("{op}: degenerate input (norm below threshold)")]
    DegenerateInput { op: &'static str },

    #[error("index {index} out of range for size {bound}")]
    Index { index: usize, bound: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("training diverged at step {step}: {breakdown}")]
    Divergence { step: usize, breakdown: Box<LossBreakdown> },
}

impl CaeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CaeError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        CaeError::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
