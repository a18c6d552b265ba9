//! Tensors, layer primitives, forward evaluation and backpropagation to
//! feature maps.

mod gradcheck;
mod layer;
mod network;
mod tensor;

pub use gradcheck::{finite_difference_logit_grad, forward_suffix_f64, GradEstimate};
pub use layer::{Conv2d, Dense, Layer, LayerKind};
pub(crate) use network::backward;
pub use network::{
    backward_to_feature_maps, forward_pass, logits, softmax, ActivationTrace, FeatureGradients, LayerGrad, Network,
    ParamGrads,
};
pub use tensor::Tensor;
