use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid json: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: dim mismatch: expected {expected} bytes, found {found}")]
    DimMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: non-finite value at byte offset {offset}")]
    NonFinitePayload { path: PathBuf, offset: u64 },

    #[error("duplicate sample id {id:?} at manifest index {index}")]
    DuplicateSample { id: String, index: usize },

    #[error("unknown block {0:?}")]
    UnknownBlock(String),

    #[error("record {sample:?} is missing block {block:?}")]
    MissingBlock { sample: String, block: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("zero-length descriptor for sample {0:?} under cosine distance")]
    ZeroVector(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("repeat {repeat}, variant {variant}, mode {mode}: {source}")]
    Experiment {
        repeat: usize,
        variant: String,
        mode: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
