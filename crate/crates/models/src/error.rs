use std::path::PathBuf;

use nl2code_core::CoreError;
use nl2code_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("corpus token {0:?} collides with a reserved vocabulary entry")]
    ReservedToken(String),
    #[error("token id {id} outside vocabulary of {size}")]
    InvalidId { id: usize, size: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("sequence of length {len} exceeds the {max} supported positions")]
    LengthOverflow { len: usize, max: usize },
    #[error("vocabulary mismatch: {} snippet token(s) missing from the pretrained vocabulary (first: {:?})", .0.len(), .0.first())]
    VocabularyMismatch(Vec<String>),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("model metadata: {0}")]
    Metadata(String),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
