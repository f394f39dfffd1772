//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The [`Graph`] builds its backward pass out of ordinary graph ops, so an
//! input gradient is itself a node that can be differentiated again. This is
//! what the gradient penalty of the critic needs. Only a handful of
//! internal ops (max-pool routing, safe division) lack a reverse rule; they
//! never occur in the critic.

mod adam;
mod checkpoint;
mod graph;
mod kernels;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError, Precision, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{Gradients, Graph, NodeId};
pub use params::{BoundParams, ParamSet};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { node: usize, op: &'static str },
    #[error("input `{0}` is not bound")]
    UnboundInput(String),
    #[error("output is not a scalar")]
    NotScalar,
    #[error("node has not been evaluated; run forward first")]
    NotEvaluated,
    #[error("op `{0}` has no registered second-derivative rule")]
    NoSecondOrderRule(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
