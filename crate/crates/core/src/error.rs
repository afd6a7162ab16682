use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unusable corpus: {0}")]
    EmptyCorpus(String),

    #[error("short-title token `{token}` does not occur (in order) in the long title")]
    Alignment { token: String },

    #[error("long title has no tokens")]
    EmptyTitle,

    #[error("need at least {min} pairs to split, got {got}")]
    TooFewPairs { min: usize, got: usize },

    #[error("{}:{line}: malformed record: {source}", path.display())]
    MalformedLine {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },

    #[error("id {id} out of range for a table with {rows} rows")]
    IdOutOfRange { id: usize, rows: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("every position is masked")]
    EmptyMask,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no replacement candidate left for position {position}")]
    NoCandidate { position: usize },

    #[error("class weight alpha = {0} is outside (0, 1)")]
    ClassWeight(f64),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("incompatible checkpoint: {}", .0.join("; "))]
    IncompatibleCheckpoint(Vec<String>),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("unknown ablation variant `{name}` (valid: {})", valid.join(", "))]
    UnknownVariant { name: String, valid: Vec<String> },

    #[error("fraction {fraction} of {available} training examples yields no examples")]
    EmptySubsample { fraction: f64, available: usize },

    #[error("nothing to report")]
    EmptyResults,

    #[error("unsupported compute device `{0}` (only `cpu` is available)")]
    Device(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
