//! Error type shared by every module of the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("kv cache invariant violated at layer {layer}: expected {expected} entries, found {found}")]
    CacheInvariant {
        layer: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("context overflow: {needed} positions requested but max_seq_len is {max_seq_len}")]
    ContextOverflow { needed: usize, max_seq_len: usize },

    #[error("prompt must contain at least one token")]
    EmptyPrompt,

    #[error("trace contains no generated tokens")]
    EmptyTrace,

    #[error("calibration set is empty")]
    EmptyCalibration,

    #[error("sequence of length {len} is shorter than n-gram order {n}")]
    SequenceTooShort { len: usize, n: usize },

    #[error("model file is missing tensor `{0}`")]
    MissingTensor(String),

    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("model payload truncated: header declares {declared} bytes, file holds {actual}")]
    Truncated { declared: u64, actual: u64 },

    #[error("unsupported model format version {0}")]
    UnknownFormatVersion(u32),

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
