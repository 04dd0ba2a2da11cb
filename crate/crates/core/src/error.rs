use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("view sampling failed: {0}")]
    Sampling(String),

    #[error("corpus generation failed: {0}")]
    Generation(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("response contains no span citation")]
    NoCitation,

    #[error("response contains {0} span citations, expected exactly one")]
    MultipleCitations(usize),

    #[error("span id {id} is outside 1..={k}")]
    InvalidSpanId { id: usize, k: usize },

    #[error("record mismatch: {0}")]
    Mismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("missing prerequisite artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Dimension {
        op,
        detail: detail.into(),
    }
}
