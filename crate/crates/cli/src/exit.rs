//! Error classification into process exit codes.

use std::fmt;

use nl2code_core::CoreError;
use nl2code_models::ModelError;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

pub type CliResult<T> = anyhow::Result<T>;

/// An error that already knows its exit code.
#[derive(Debug)]
pub struct Coded {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for Coded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Coded {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    Coded {
        code: EXIT_USAGE,
        message: message.into(),
    }
    .into()
}

pub fn mismatch(message: impl Into<String>) -> anyhow::Error {
    Coded {
        code: EXIT_MISMATCH,
        message: message.into(),
    }
    .into()
}

fn core_code(e: &CoreError) -> i32 {
    match e {
        CoreError::LangMismatch { .. } | CoreError::ModelLangMismatch { .. } => EXIT_MISMATCH,
        CoreError::Translation(_) | CoreError::EmptyProgram(_) => EXIT_INTERNAL,
        _ => EXIT_USAGE,
    }
}

fn model_code(e: &ModelError) -> i32 {
    match e {
        ModelError::Core(c) => core_code(c),
        ModelError::VocabularyMismatch(_) | ModelError::Metadata(_) => EXIT_MISMATCH,
        ModelError::Config(_) | ModelError::Io { .. } | ModelError::Empty(_) | ModelError::LengthOverflow { .. } => {
            EXIT_USAGE
        }
        _ => EXIT_INTERNAL,
    }
}

/// The first classifiable error in the chain decides; anything unknown is
/// an internal failure.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(c) = cause.downcast_ref::<Coded>() {
            return c.code;
        }
        if let Some(c) = cause.downcast_ref::<CoreError>() {
            return core_code(c);
        }
        if let Some(m) = cause.downcast_ref::<ModelError>() {
            return model_code(m);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_USAGE;
        }
    }
    EXIT_INTERNAL
}
