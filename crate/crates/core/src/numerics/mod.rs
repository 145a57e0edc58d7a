//! Dense-array primitives and the differentiable layers of the repair network.
//!
//! Every layer is a pair of free functions: a forward map and its hand-derived
//! backward map. Nothing here builds a graph; callers keep whatever
//! intermediates the backward pass needs.

mod batch;
mod layers;
mod loss;
mod param;

pub use batch::Batch3;
pub use layers::{
    conv1x1_backward, conv1x1_forward, depthwise_conv_backward, depthwise_conv_forward, gelu,
    gelu_backward, gelu_derivative, gelu_forward, Conv1x1Grads, DepthwiseGrads,
};
pub use loss::{first_diff, first_diff_adjoint, huber, huber_backward, DEFAULT_HUBER_DELTA};
pub use param::{AdamWConfig, ParamTensor};
