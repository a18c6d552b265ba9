use crate::error::{Error, Result};

use super::layer::{conv2d_backward, maxpool_backward, Layer};
use super::Tensor;

/// An ordered stack of layers realizing a classifier `image → logits`.
///
/// Every layer up to the last non-sigmoid layer feeds the logits; a trailing
/// sigmoid (if any) only squashes them for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
    logit_layer: usize,
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.len() != 3 {
            return Err(Error::Spec(format!("input shape must be C×H×W, got {input_shape:?}")));
        }
        let mut shapes = vec![input_shape.clone()];
        for (i, layer) in layers.iter().enumerate() {
            let prev = shapes.last().unwrap();
            let next = layer.output_shape(prev).ok_or_else(|| {
                Error::Spec(format!(
                    "layer {i} ({:?}) cannot accept input of shape {prev:?}",
                    layer.kind()
                ))
            })?;
            if next.contains(&0) {
                return Err(Error::Spec(format!("layer {i} produces an empty output {next:?}")));
            }
            shapes.push(next);
        }
        let logit_layer = layers
            .iter()
            .rposition(|l| !matches!(l, Layer::Sigmoid))
            .ok_or_else(|| Error::Spec("network has no logit-producing layer".into()))?;
        if shapes[logit_layer + 1].len() != 1 {
            return Err(Error::Spec(format!(
                "logits must be rank 1, got {:?}",
                shapes[logit_layer + 1]
            )));
        }
        Ok(Self {
            input_shape,
            layers,
            shapes,
            logit_layer,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, layer_id: usize) -> Option<&Layer> {
        self.layers.get(layer_id)
    }

    /// Shape of the output of `layer_id`.
    pub fn output_shape(&self, layer_id: usize) -> &[usize] {
        &self.shapes[layer_id + 1]
    }

    pub fn num_classes(&self) -> usize {
        self.shapes[self.logit_layer + 1][0]
    }

    /// Index of the layer whose output is the logit vector.
    pub fn logit_layer(&self) -> usize {
        self.logit_layer
    }

    pub fn last_conv_layer(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| matches!(l, Layer::Conv2d(_)))
    }

    pub fn parameterized_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| self.layers[i].has_parameters())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(Layer::parameters)
            .map(|(w, b)| w.len() + b.len())
            .sum()
    }

    /// Replaces the parameters of `layer_id`, keeping shapes.
    pub(crate) fn layer_mut(&mut self, layer_id: usize) -> &mut Layer {
        &mut self.layers[layer_id]
    }

    fn check_input(&self, image: &Tensor) -> Result<()> {
        if image.shape() != self.input_shape.as_slice() {
            return Err(Error::InputShape {
                expected: self.input_shape.clone(),
                actual: image.shape().to_vec(),
            });
        }
        if !image.is_finite() {
            return Err(Error::Domain("input image contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Every activation of one forward pass: the input followed by each layer's
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    activations: Vec<Tensor>,
    logit_layer: usize,
}

impl ActivationTrace {
    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    pub fn input(&self) -> &Tensor {
        &self.activations[0]
    }

    pub fn output(&self, layer_id: usize) -> &Tensor {
        &self.activations[layer_id + 1]
    }

    /// Input at index 0, then one entry per layer.
    pub fn activations(&self) -> &[Tensor] {
        &self.activations
    }

    pub fn logits(&self) -> &[f32] {
        self.activations[self.logit_layer + 1].data()
    }

    /// Softmax over the logits; for two classes entry 1 equals
    /// `sigmoid(logit_1 − logit_0)`.
    pub fn probabilities(&self) -> Vec<f32> {
        softmax(self.logits())
    }
}

pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f32 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn forward_pass(network: &Network, image: &Tensor) -> Result<ActivationTrace> {
    network.check_input(image)?;
    let mut activations = Vec::with_capacity(network.layers.len() + 1);
    activations.push(image.clone());
    for (i, layer) in network.layers.iter().enumerate() {
        let prev = activations.last().unwrap();
        let data = layer.forward(prev.data(), prev.shape());
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("layer {i} produced non-finite activations")));
        }
        activations.push(Tensor::from_parts(network.shapes[i + 1].clone(), data));
    }
    Ok(ActivationTrace {
        activations,
        logit_layer: network.logit_layer,
    })
}

/// Class logits only; skips retaining intermediate activations.
pub fn logits(network: &Network, image: &Tensor) -> Result<Vec<f32>> {
    network.check_input(image)?;
    let mut current = image.data().to_vec();
    for (i, layer) in network.layers[..=network.logit_layer].iter().enumerate() {
        current = layer.forward(&current, &network.shapes[i]);
    }
    if current.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite logits".into()));
    }
    Ok(current)
}

/// Gradient of a scalar with respect to every activation of a trace; index 0
/// is the input image, index `i + 1` the output of layer `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGradients {
    grads: Vec<Tensor>,
}

impl FeatureGradients {
    pub fn input(&self) -> &Tensor {
        &self.grads[0]
    }

    pub fn output(&self, layer_id: usize) -> &Tensor {
        &self.grads[layer_id + 1]
    }

    pub fn all(&self) -> &[Tensor] {
        &self.grads
    }
}

/// Gradient of a scalar with respect to one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Per-layer parameter gradients; `None` for parameterless layers.
pub type ParamGrads = Vec<Option<LayerGrad>>;

fn check_trace(network: &Network, trace: &ActivationTrace) -> Result<()> {
    if trace.activations.len() != network.layers.len() + 1 {
        return Err(Error::Consistency(format!(
            "trace has {} activations, network has {} layers",
            trace.activations.len(),
            network.layers.len()
        )));
    }
    for (i, (a, s)) in trace.activations.iter().zip(&network.shapes).enumerate() {
        if a.shape() != s.as_slice() {
            return Err(Error::Consistency(format!(
                "activation {i} has shape {:?}, network expects {s:?}",
                a.shape()
            )));
        }
    }
    Ok(())
}

/// ∂S_c/∂A for every activation A, where S_c is the pre-sigmoid logit of
/// `class_index`. Activations downstream of the logits get zero gradients.
pub fn backward_to_feature_maps(
    network: &Network,
    trace: &ActivationTrace,
    class_index: usize,
) -> Result<FeatureGradients> {
    let classes = network.num_classes();
    if class_index >= classes {
        return Err(Error::Index {
            what: "class",
            index: class_index,
            limit: classes,
        });
    }
    check_trace(network, trace)?;
    let mut upstream = vec![0.0f32; classes];
    upstream[class_index] = 1.0;
    let (grads, _) = backward(network, trace, &upstream, true, false);
    Ok(FeatureGradients { grads })
}

/// Backpropagates `upstream` (∂L/∂logits) through the network.
///
/// The input gradient stays zero unless `need_input_grad`; parameter
/// gradients are only filled when `need_params`.
pub(crate) fn backward(
    network: &Network,
    trace: &ActivationTrace,
    upstream: &[f32],
    need_input_grad: bool,
    need_params: bool,
) -> (Vec<Tensor>, ParamGrads) {
    let n = network.layers.len();
    // propagated in f64: each layer's gradient sums many cancelling terms
    let mut grads: Vec<Vec<f64>> = network.shapes.iter().map(|s| vec![0.0; s.iter().product()]).collect();
    let mut params: ParamGrads = vec![None; n];
    for (g, &u) in grads[network.logit_layer + 1].iter_mut().zip(upstream) {
        *g = u as f64;
    }

    for i in (0..=network.logit_layer).rev() {
        let layer = &network.layers[i];
        let input = &trace.activations[i];
        let output = &trace.activations[i + 1];
        let (before, after) = grads.split_at_mut(i + 1);
        let g_out = after[0].as_slice();
        let want_in = i > 0 || need_input_grad;
        let g_in = before[i].as_mut_slice();
        let s = input.shape();
        match layer {
            Layer::Conv2d(conv) => {
                let mut pg = need_params.then(|| LayerGrad {
                    weight: vec![0.0; conv.weight.len()],
                    bias: vec![0.0; conv.bias.len()],
                });
                conv2d_backward(
                    input.data(),
                    (s[0], s[1], s[2]),
                    conv.weight.data(),
                    conv.out_channels(),
                    conv.kernel(),
                    g_out,
                    want_in.then_some(g_in),
                    pg.as_mut().map(|p| (p.weight.as_mut_slice(), p.bias.as_mut_slice())),
                );
                params[i] = pg;
            }
            Layer::Relu => {
                for ((gi, &go), &y) in g_in.iter_mut().zip(g_out).zip(output.data()) {
                    *gi = if y > 0.0 { go } else { 0.0 };
                }
            }
            Layer::MaxPool2x2 => {
                maxpool_backward(input.data(), (s[0], s[1], s[2]), g_out, g_in);
            }
            Layer::GlobalAvgPool => {
                let plane = s[1] * s[2];
                let z = plane as f64;
                for (c, &go) in g_out.iter().enumerate() {
                    g_in[c * plane..(c + 1) * plane].fill(go / z);
                }
            }
            Layer::Dense(dense) => {
                let inputs = dense.in_features();
                let w = dense.weight.data();
                if want_in {
                    for (o, &go) in g_out.iter().enumerate() {
                        for (gi, &wv) in g_in.iter_mut().zip(&w[o * inputs..(o + 1) * inputs]) {
                            *gi += wv as f64 * go;
                        }
                    }
                }
                if need_params {
                    let x = input.data();
                    let mut weight = vec![0.0; w.len()];
                    for (o, &go) in g_out.iter().enumerate() {
                        for (gw, &xv) in weight[o * inputs..(o + 1) * inputs].iter_mut().zip(x) {
                            *gw = (go * xv as f64) as f32;
                        }
                    }
                    params[i] = Some(LayerGrad {
                        weight,
                        bias: g_out.iter().map(|&g| g as f32).collect(),
                    });
                }
            }
            Layer::Sigmoid => {
                for ((gi, &go), &y) in g_in.iter_mut().zip(g_out).zip(output.data()) {
                    *gi = go * y as f64 * (1.0 - y as f64);
                }
            }
        }
    }
    let grads = grads
        .into_iter()
        .zip(&network.shapes)
        .map(|(g, s)| Tensor::from_parts(s.clone(), g.into_iter().map(|v| v as f32).collect()))
        .collect();
    (grads, params)
}
