//! Small dense-tensor numerics shared by the translation models.
//!
//! Everything is double precision and row-major. A [`Graph`] records one
//! forward pass as a tape; [`Graph::backward`] walks it in reverse and
//! returns the gradients of a scalar loss with respect to every node,
//! including the parameters borrowed from a [`ParamStore`].

pub mod checkpoint;
mod error;
pub mod gradcheck;
mod graph;
pub mod lstm;
pub mod optim;
mod params;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use lstm::{lstm_cell, LstmWeights};
pub use optim::{clip_grad_norm, AdamConfig, AdamState};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
