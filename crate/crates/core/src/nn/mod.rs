//! Minimal differentiable network engine.

pub mod arch;
pub mod checkpoint;
mod conv;
pub mod graph;
pub mod group;
pub mod layer;
pub mod loss;
pub mod optim;

pub use arch::MicroResNet;
pub use checkpoint::{checkpoint_from_bytes, checkpoint_hash, checkpoint_to_bytes, load_checkpoint, save_checkpoint};
pub use graph::{LossGrads, ModelGraph, Param, Tape, Want};
pub use group::Group;
pub use layer::{ConvSpec, GroupConvSpec, LayerSpec};
pub use loss::softmax_cross_entropy;
pub use optim::Sgd;
