//! Dense tensors, reverse-mode differentiation, feed-forward networks and AdamW.

mod adamw;
mod mlp;
mod tape;
mod tensor;

pub use adamw::{AdamWConfig, AdamWState};
pub use mlp::{Activation, Layer, Mlp, MlpVars};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::positive_elu;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("loss must be a scalar, got shape {0:?}")]
    LossNotScalar(Vec<usize>),
    #[error("variable does not belong to this tape")]
    NodeNotOnTape,
}
