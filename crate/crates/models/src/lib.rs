//! Translation models: a recurrent encoder-decoder with additive attention
//! and a small pre-trainable transformer, both decoded with beam search.

pub mod beam;
mod error;
pub mod model;
pub mod seq2seq;
pub mod train_log;
pub mod transformer;
pub mod vocab;

pub use error::{ModelError, Result};
pub use model::{EchoTable, Network, TrainedModel};
