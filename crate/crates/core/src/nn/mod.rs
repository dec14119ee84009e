//! Small differentiable-programming kernel: tape autodiff, dense layers,
//! a gated recurrent cell, policy distributions, A2C losses and Adam.

pub mod a2c;
pub mod adam;
pub mod checkpoint;
pub mod dist;
pub mod graph;
pub mod mlp;
pub mod norm;
pub mod recurrent;
pub mod tensor;

pub use a2c::{a2c_loss_nodes, a2c_losses, td_target};
pub use adam::AdamState;
pub use checkpoint::Checkpoint;
pub use dist::{
    argmax_masked, categorical_entropy, plackett_luce_log_prob, plackett_luce_sample, sample_categorical, softmax,
};
pub use graph::{Graph, NodeId};
pub use mlp::Mlp;
pub use norm::RunningNorm;
pub use recurrent::GatedCell;
pub use tensor::{Grads, ParamId, ParamStore, Tensor};
