//! Dense tensor math with reverse-mode autodiff, the layer types the agents
//! are built from, Adam, and the imitation/metacognition losses.

mod gradcheck;
mod graph;
mod layers;
mod loss;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{gradcheck, GradcheckReport, LayerKind};
pub use graph::{Graph, Var, BCE_CLAMP};
pub use layers::{
    forward_conv_encoder, forward_gru, forward_linear, Conv, ConvEncoder, Gru, Linear, Mlp, EMBED_DIM,
    ENCODER_CHANNELS, GRID_CHANNELS, GRID_SIDE, TASK_DIM,
};
pub use loss::{kl_bc_loss, kl_bc_value, meta_bce_loss, meta_bce_value};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{Bound, ParamEntry, ParamId, ParamStore};
pub use tensor::{argmax, log_softmax, sigmoid, softmax, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGrad(String),
    #[error("oracle distribution is not normalized (sum = {0})")]
    NotNormalized(f64),
    #[error("{0}")]
    Invalid(String),
}
