//! Dense tensors with reverse-mode differentiation.

pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use params::{Gradients, ParamCheckpoint, ParamStore, StoredTensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use tape::{Precision, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("expected a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("unknown parameter `{0}`")]
    MissingParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
