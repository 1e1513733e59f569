use std::path::PathBuf;

use thiserror::Error;

use crate::Lang;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("line {line}: record language {found} does not match requested {expected}")]
    LangMismatch {
        line: usize,
        expected: Lang,
        found: Lang,
    },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("unknown program id `{0}`")]
    UnknownProgram(String),
    #[error("dev fraction {0} outside [0, 1)")]
    BadFraction(f64),
    #[error("invalid token {0:?}")]
    InvalidToken(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("synthetic generation: {0}")]
    Generation(String),
    #[error("annotation: {0}")]
    Annotation(String),
    #[error("language mismatch: model translates {model}, data is {data}")]
    ModelLangMismatch { model: Lang, data: Lang },
    #[error("translation failed: {0}")]
    Translation(String),
    #[error("program `{0}` has no reference lines")]
    EmptyProgram(String),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
