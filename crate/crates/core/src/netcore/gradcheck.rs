use crate::error::{Error, Result};

use super::{forward_pass, Network, Tensor};

/// A gradient estimate held in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradEstimate {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    /// Entries whose forward and backward one-sided differences disagree:
    /// a ReLU or max-pool switch lies within one step, so the central
    /// difference is not a derivative there.
    pub kinks: Vec<bool>,
}

impl GradEstimate {
    pub fn kink_fraction(&self) -> f64 {
        if self.kinks.is_empty() {
            return 0.0;
        }
        self.kinks.iter().filter(|&&k| k).count() as f64 / self.kinks.len() as f64
    }
}

/// Runs layers `from..=logit_layer` in `f64` starting from `activation`.
pub fn forward_suffix_f64(network: &Network, from: usize, activation: &[f64]) -> Vec<f64> {
    let mut current = activation.to_vec();
    for i in from..=network.logit_layer() {
        let shape = if i == 0 {
            network.input_shape()
        } else {
            network.output_shape(i - 1)
        };
        current = network.layers()[i].forward(&current, shape);
    }
    current
}

/// Central-difference estimate of ∂S_c/∂A where A is the output of
/// `layer_id`, computed in `f64` by perturbing the cached activation and
/// re-running the rest of the network.
pub fn finite_difference_logit_grad(
    network: &Network,
    image: &Tensor,
    layer_id: usize,
    class_index: usize,
    step: f64,
) -> Result<GradEstimate> {
    if !(step > 0.0) {
        return Err(Error::Domain(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let layers = network.layers().len();
    if layer_id >= layers {
        return Err(Error::Index {
            what: "layer",
            index: layer_id,
            limit: layers,
        });
    }
    if class_index >= network.num_classes() {
        return Err(Error::Index {
            what: "class",
            index: class_index,
            limit: network.num_classes(),
        });
    }
    let trace = forward_pass(network, image)?;
    let shape = trace.output(layer_id).shape().to_vec();
    if layer_id >= network.logit_layer() {
        let mut values = vec![0.0; trace.output(layer_id).len()];
        if layer_id == network.logit_layer() {
            values[class_index] = 1.0;
        }
        let kinks = vec![false; values.len()];
        return Ok(GradEstimate { shape, values, kinks });
    }
    let mut base: Vec<f64> = trace.output(layer_id).data().iter().map(|&v| v as f64).collect();
    let centre = forward_suffix_f64(network, layer_id + 1, &base)[class_index];
    let mut values = Vec::with_capacity(base.len());
    let mut kinks = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let orig = base[i];
        base[i] = orig + step;
        let plus = forward_suffix_f64(network, layer_id + 1, &base)[class_index];
        base[i] = orig - step;
        let minus = forward_suffix_f64(network, layer_id + 1, &base)[class_index];
        base[i] = orig;
        values.push((plus - minus) / (2.0 * step));
        let (ahead, behind) = ((plus - centre) / step, (centre - minus) / step);
        kinks.push((ahead - behind).abs() > 1e-6 * ahead.abs().max(behind.abs()) + 1e-9);
    }
    Ok(GradEstimate { shape, values, kinks })
}
