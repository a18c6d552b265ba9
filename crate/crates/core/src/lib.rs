//! Saliency explanations (Grad-CAM, Kernel SHAP) for small convolutional
//! classifiers, and the SSIM-scored sanity checks and shortcut screen used to
//! audit them.

pub mod auditor;
pub mod error;
pub mod explain;
pub mod imagemetrics;
pub mod models;
pub mod netcore;
pub mod seed;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
pub use netcore::{ActivationTrace, Layer, LayerKind, Network, Tensor};
