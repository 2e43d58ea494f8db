use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("duplicate sample id `{0}`")]
    DuplicateSample(String),
    #[error("unknown sample `{0}`")]
    UnknownSample(String),
    #[error("unknown identity `{0}`")]
    UnknownIdentity(String),
    #[error("insufficient identities: need at least 2, have {0}")]
    InsufficientIdentities(usize),
    #[error("margin undefined for fewer than 2 classes")]
    MarginUndefined,
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("pool invariant violated: {0}")]
    PoolInvariant(String),
    #[error("sample `{0}` is not in the query set")]
    NotQueried(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("dataset has {} invalid line(s); first: {}", .0.len(), .0.first().map(|e| e.to_string()).unwrap_or_default())]
    InvalidDataset(Vec<crate::ingest::LineError>),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
