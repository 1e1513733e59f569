//! Corpus handling, the intent-standardization pipeline, and evaluation
//! metrics for translating English intents into Python or IA-32 assembly
//! snippets.

pub mod corpus;
mod error;
pub mod eval;
mod lang;
pub mod pipeline;
pub mod synthetic;

pub use error::{CoreError, Result};
pub use lang::Lang;
