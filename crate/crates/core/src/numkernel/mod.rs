//! Dense tensors, reverse-mode differentiation and the adaptive-moment
//! optimizer that the networks are built on.

mod checkpoint;
mod graph;
mod optim;
mod tensor;

pub use checkpoint::{
    data_path, load_checkpoint, save_checkpoint, CheckpointEntry, CheckpointManifest,
    CHECKPOINT_FORMAT,
};
pub use graph::{backward, forward, Bindings, ComputeGraph, Evaluation, Gradients, NodeId, Op};
pub use optim::{adam_step, clip_global_norm, global_norm, AdamConfig, ParamStore};
pub use tensor::Tensor;

pub(crate) use graph::{argmax, log_softmax_row, softmax_row};
