//! Capacity networks for multiple instance regression.
//!
//! A capacity network reads the instances of a bag in order and emits one
//! scalar per instance, the added value of that instance given the ones
//! before it. The bag prediction is the sum of these intermediate results,
//! which makes the network's internals directly comparable with the exact
//! sequential decomposition of a set function.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense tensors, a reverse-mode tape, Adam, checkpoints.
//! - [`oracle`]: exact task utilities and their added-value decomposition.
//! - [`data`]: IDX parsing, bag generation, featurization, persistence.
//! - [`models`]: DeepSet, attention pooling, RNN/LSTM/GRU and their
//!   capacity variants.
//! - [`train`]: the deterministic training loop.
//! - [`eval`]: MSE, intermediate-result error, permutation sensitivity,
//!   rounded accuracy and set-size sweeps.

pub mod autodiff;
pub mod data;
pub mod eval;
pub mod models;
pub mod oracle;
pub mod stats;
pub mod train;

pub use models::{Family, ForwardOutput, Model, ModelSpec};
pub use oracle::{TaskKind, TaskSpec};
