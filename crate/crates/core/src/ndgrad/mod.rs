//! Minimal reverse-mode autodiff: tensors, tape, layers, optimizer, and the
//! checkpoint container.

pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod store;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{GradientMap, Graph, NodeId};
pub use layers::{ConvLayer, LinearLayer};
pub use optim::{clip_grad_norm, global_grad_norm, AdamW, AdamWConfig};
pub use store::{ParamId, ParamStore};
pub use tensor::Tensor;
