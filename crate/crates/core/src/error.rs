use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("non-finite gradient for parameter `{param}` at step {step}")]
    NonFiniteGradient { param: String, step: u64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("transport error after {} attempt(s): {}", attempts.len(), attempts.join("; "))]
    Transport { attempts: Vec<String> },

    #[error("rationale generation failed for `{sample_id}`: {}", statuses.join(", "))]
    Rationale {
        sample_id: String,
        statuses: Vec<String>,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("missing input: {}", .0.display())]
    MissingPath(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
