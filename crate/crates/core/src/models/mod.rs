//! Network specs, seeded initialization, layer re-initialization for the
//! randomization test, and the model container format.

mod persist;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{Conv2d, Dense, Layer, Network, Tensor};
use crate::seed;
use crate::trainer::{MetricsRecord, TrainConfig};

pub use persist::{load_model, model_from_bytes, model_to_bytes, save_model, MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        out_channels: usize,
        kernel: usize,
    },
    Relu,
    #[serde(rename = "maxpool2x2")]
    MaxPool2x2,
    GlobalAvgPool,
    Dense {
        out_features: usize,
    },
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// channels × height × width
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    pub init_seed: u64,
}

impl NetworkSpec {
    /// conv8 → relu → pool → conv16 → relu → pool → conv32 → relu → gap → dense2
    pub fn toy(input_side: usize, init_seed: u64) -> Self {
        use LayerSpec::*;
        Self {
            input_shape: [3, input_side, input_side],
            layers: vec![
                Conv2d {
                    out_channels: 8,
                    kernel: 3,
                },
                Relu,
                MaxPool2x2,
                Conv2d {
                    out_channels: 16,
                    kernel: 3,
                },
                Relu,
                MaxPool2x2,
                Conv2d {
                    out_channels: 32,
                    kernel: 3,
                },
                Relu,
                GlobalAvgPool,
                Dense { out_features: 2 },
            ],
            num_classes: 2,
            init_seed,
        }
    }
}

/// He-uniform bound for a layer with `fan_in` inputs.
fn init_bound(fan_in: usize) -> f32 {
    (6.0 / fan_in as f32).sqrt()
}

fn init_parameters(weight_shape: &[usize], fan_in: usize, seed: u64) -> (Tensor, Tensor) {
    let mut rng = seed::rng(seed, 0);
    let bound = init_bound(fan_in);
    let n: usize = weight_shape.iter().product();
    let weight = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    (
        Tensor::from_parts(weight_shape.to_vec(), weight),
        Tensor::zeros(&weight_shape[..1]),
    )
}

/// Bias that makes each filter see its input shifted by `-INPUT_CENTER`.
fn centering_bias(weight: &Tensor, fan_in: usize) -> Tensor {
    let bias = weight
        .data()
        .chunks(fan_in)
        .map(|w| -INPUT_CENTER * w.iter().sum::<f32>())
        .collect();
    Tensor::from_parts(vec![weight.shape()[0]], bias)
}

/// Images lie in `[0, 1]`; the first conv layer starts out centred on this.
pub const INPUT_CENTER: f32 = 0.5;

pub fn build_network(spec: &NetworkSpec) -> Result<Network> {
    if !spec.layers.iter().any(|l| matches!(l, LayerSpec::Conv2d { .. })) {
        return Err(Error::Spec("at least one conv2d layer is required".into()));
    }
    let mut shape = spec.input_shape.to_vec();
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (i, ls) in spec.layers.iter().enumerate() {
        let layer_seed = seed::derive(spec.init_seed, i as u64);
        let layer = match *ls {
            LayerSpec::Conv2d { out_channels, kernel } => {
                let [c, ..] = shape[..] else {
                    return Err(Error::Spec(format!(
                        "conv2d at layer {i} needs a C×H×W input, got {shape:?}"
                    )));
                };
                if out_channels == 0 || kernel == 0 {
                    return Err(Error::Spec(format!("layer {i}: zero-sized conv2d")));
                }
                let fan_in = c * kernel * kernel;
                let (weight, mut bias) = init_parameters(&[out_channels, c, kernel, kernel], fan_in, layer_seed);
                if i == 0 {
                    bias = centering_bias(&weight, fan_in);
                }
                Layer::Conv2d(Conv2d { weight, bias })
            }
            LayerSpec::Dense { out_features } => {
                let n: usize = shape.iter().product();
                if out_features == 0 {
                    return Err(Error::Spec(format!("layer {i}: zero-sized dense")));
                }
                let (weight, bias) = init_parameters(&[out_features, n], n, layer_seed);
                Layer::Dense(Dense { weight, bias })
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::MaxPool2x2 => Layer::MaxPool2x2,
            LayerSpec::GlobalAvgPool => Layer::GlobalAvgPool,
            LayerSpec::Sigmoid => Layer::Sigmoid,
        };
        shape = layer
            .output_shape(&shape)
            .ok_or_else(|| Error::Spec(format!("layer {i} ({ls:?}) cannot accept input {shape:?}")))?;
        layers.push(layer);
    }
    let network = Network::new(spec.input_shape.to_vec(), layers)?;
    if network.num_classes() != spec.num_classes {
        return Err(Error::Spec(format!(
            "network produces {} logits, spec declares {} classes",
            network.num_classes(),
            spec.num_classes
        )));
    }
    Ok(network)
}

/// Copy of `network` with the weights of `layer_id` re-drawn from the
/// initialization distribution. Other layers are untouched.
pub fn randomize_layer(network: &Network, layer_id: usize, seed: u64) -> Result<Network> {
    let layer = network.layer(layer_id).ok_or(Error::Index {
        what: "layer",
        index: layer_id,
        limit: network.layers().len(),
    })?;
    let Some((weight, _)) = layer.parameters() else {
        return Err(Error::ParameterlessLayer(layer_id));
    };
    let shape = weight.shape().to_vec();
    let fan_in = shape[1..].iter().product();
    let (new_weight, mut new_bias) = init_parameters(&shape, fan_in, seed::derive(seed, layer_id as u64));
    if layer_id == 0 && shape.len() == 4 {
        new_bias = centering_bias(&new_weight, fan_in);
    }
    let mut out = network.clone();
    let (w, b) = out.layer_mut(layer_id).parameters_mut().expect("checked above");
    *w = new_weight;
    *b = new_bias;
    Ok(out)
}

/// Cascading randomization: each listed layer re-drawn in order, cumulatively.
/// Returns the network after each stage.
pub fn randomize_cascade(network: &Network, layer_ids: &[usize], seed: u64) -> Result<Vec<Network>> {
    let mut current = network.clone();
    let mut stages = Vec::with_capacity(layer_ids.len());
    for &id in layer_ids {
        current = randomize_layer(&current, id, seed)?;
        stages.push(current.clone());
    }
    Ok(stages)
}

/// Where a model came from and how well it did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub model_id: String,
    pub train_seed: u64,
    pub subsample_id: Option<u64>,
    pub train_config: Option<TrainConfig>,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub metrics: Option<MetricsRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub spec: NetworkSpec,
    pub network: Network,
    pub provenance: Provenance,
}

impl ModelBundle {
    /// Freshly initialized, untrained model.
    pub fn initialized(spec: NetworkSpec, model_id: impl Into<String>) -> Result<Self> {
        let network = build_network(&spec)?;
        Ok(Self {
            spec,
            network,
            provenance: Provenance {
                model_id: model_id.into(),
                ..Provenance::default()
            },
        })
    }

    pub fn id(&self) -> &str {
        &self.provenance.model_id
    }

    pub fn test_auc(&self) -> Option<f64> {
        self.provenance.metrics.as_ref().map(|m| m.auc)
    }
}
