//! Dense-tensor reverse-mode differentiation and the Adam optimizer.
//!
//! A [`Tape`] records one forward pass over [`Tensor`] values. Parameters are
//! pulled onto the tape from a [`ParamStore`] by name, and
//! [`Tape::backward`] returns [`Gradients`] keyed by the same names, ready
//! for [`AdamState::step`].

mod adam;
pub mod checkpoint;
mod params;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use params::{init_rng, uniform_init, Gradients, ParamStore};
pub use tape::{Activation, Tape, Var};
pub use tensor::Tensor;


#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },
    #[error("unknown activation {0:?}")]
    UnknownActivation(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward already ran on this tape; rebuild it with a new forward pass")]
    BackwardTwice,
    #[error("no gradient for parameter {0:?}")]
    MissingGradient(String),
}
