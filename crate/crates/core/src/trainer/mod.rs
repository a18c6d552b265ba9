//! Class-balanced training, evaluation metrics, and the multi-model suite.

mod metrics;
mod suite;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelBundle;
use crate::netcore::{backward, forward_pass, softmax, Layer, LayerGrad, Network, ParamGrads};
use crate::seed;
use crate::synthgen::LabeledImage;

pub use metrics::{auc, evaluate, melanoma_probability, recall, Confusion, MetricsRecord};
pub use suite::{train_suite, OptimizerChoice, SearchSpace, SeedPolicy, Suite, SuiteConfig, SuiteRow, SuiteSummary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    /// `v ← μv + g; θ ← θ − lr·v`
    SgdMomentum { momentum: f64 },
    /// Adam with bias correction, ε = 1e-8.
    Adam { beta1: f64, beta2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub subsample_id: Option<u64>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be ≥ 0",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be ≥ 1".into()));
        }
        match self.optimizer {
            Optimizer::SgdMomentum { momentum } if !(0.0..1.0).contains(&momentum) => {
                Err(Error::Config(format!("momentum {momentum} must lie in [0, 1)")))
            }
            Optimizer::Adam { beta1, beta2 } if !(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0) => Err(
                Error::Config(format!("Adam betas ({beta1}, {beta2}) must lie in (0, 1)")),
            ),
            _ => Ok(()),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Adam {
                beta1: 0.9,
                beta2: 0.999,
            },
            learning_rate: 1e-3,
            epochs: 24,
            batch_size: 8,
            seed: 0,
            subsample_id: None,
        }
    }
}

const ADAM_EPSILON: f64 = 1e-8;

/// Mean two-class cross-entropy on the logits and its parameter gradient.
pub fn loss_and_gradients(network: &Network, batch: &[&LabeledImage]) -> Result<(f64, ParamGrads)> {
    let per_sample: Vec<(f64, ParamGrads)> = batch
        .par_iter()
        .map(|img| {
            let trace = forward_pass(network, &img.image)?;
            let target = img.label.index();
            let probs = softmax(trace.logits());
            let loss = -(probs[target].max(f32::MIN_POSITIVE) as f64).ln();
            let mut upstream = probs;
            upstream[target] -= 1.0;
            let (_, grads) = backward(network, &trace, &upstream, false, true);
            Ok((loss, grads))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f32;
    let mut total_loss = 0.0;
    let mut sum: ParamGrads = vec![None; network.layers().len()];
    // Fixed reduction order keeps results independent of thread count.
    for (loss, grads) in per_sample {
        total_loss += loss;
        for (acc, g) in sum.iter_mut().zip(grads) {
            let Some(g) = g else { continue };
            match acc {
                None => *acc = Some(g),
                Some(a) => {
                    a.weight.iter_mut().zip(&g.weight).for_each(|(x, y)| *x += y);
                    a.bias.iter_mut().zip(&g.bias).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    for g in sum.iter_mut().flatten() {
        g.weight.iter_mut().for_each(|v| *v *= scale);
        g.bias.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((total_loss / batch.len() as f64, sum))
}

/// Per-parameter optimizer memory, laid out like `ParamGrads`.
struct OptimizerState {
    first: ParamGrads,
    second: ParamGrads,
    step: i32,
}

impl OptimizerState {
    fn new(network: &Network) -> Self {
        let zeros: ParamGrads = network
            .layers()
            .iter()
            .map(|l| {
                l.parameters().map(|(w, b)| LayerGrad {
                    weight: vec![0.0; w.len()],
                    bias: vec![0.0; b.len()],
                })
            })
            .collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    fn apply(&mut self, network: &mut Network, grads: &ParamGrads, optimizer: Optimizer, lr: f64) {
        self.step += 1;
        for layer_id in network.parameterized_layers() {
            let g = grads[layer_id]
                .as_ref()
                .expect("gradient for every parameterized layer");
            let m = self.first[layer_id].as_mut().unwrap();
            let v = self.second[layer_id].as_mut().unwrap();
            let (w, b) = network.layer_mut(layer_id).parameters_mut().unwrap();
            let pairs = [
                (w.data_mut(), &g.weight, &mut m.weight, &mut v.weight),
                (b.data_mut(), &g.bias, &mut m.bias, &mut v.bias),
            ];
            for (params, grad, m, v) in pairs {
                match optimizer {
                    Optimizer::SgdMomentum { momentum } => {
                        let (mu, lr) = (momentum as f32, lr as f32);
                        for ((p, &g), vel) in params.iter_mut().zip(grad.iter()).zip(m.iter_mut()) {
                            *vel = mu * *vel + g;
                            *p -= lr * *vel;
                        }
                    }
                    Optimizer::Adam { beta1, beta2 } => {
                        let c1 = 1.0 - beta1.powi(self.step);
                        let c2 = 1.0 - beta2.powi(self.step);
                        for (((p, &g), m1), m2) in
                            params.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut())
                        {
                            *m1 = (beta1 * *m1 as f64 + (1.0 - beta1) * g as f64) as f32;
                            *m2 = (beta2 * *m2 as f64 + (1.0 - beta2) * (g as f64).powi(2)) as f32;
                            let m_hat = *m1 as f64 / c1;
                            let v_hat = *m2 as f64 / c2;
                            *p -= (lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON)) as f32;
                        }
                    }
                }
            }
        }
    }
}

/// One plain gradient step `θ ← θ − lr·∇L` on `batch`.
pub fn sgd_step(network: &Network, batch: &[&LabeledImage], lr: f64) -> Result<Network> {
    let (_, grads) = loss_and_gradients(network, batch)?;
    let mut out = network.clone();
    OptimizerState::new(network).apply(&mut out, &grads, Optimizer::SgdMomentum { momentum: 0.0 }, lr);
    Ok(out)
}

/// Trains `initial` with mini-batches drawn from `train`, then evaluates on
/// `test`. Deterministic for a given `(config, train, test)`.
pub fn train(
    initial: &ModelBundle,
    train: &[LabeledImage],
    test: &[LabeledImage],
    config: &TrainConfig,
) -> Result<ModelBundle> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Size("empty training set".into()));
    }
    let mut network = initial.network.clone();
    let mut state = OptimizerState::new(&network);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut seed::rng(config.seed, epoch as u64));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&LabeledImage> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = loss_and_gradients(&network, &batch).map_err(|e| match e {
                Error::Domain(_) => Error::Diverged { step, loss: f64::NAN },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            state.apply(&mut network, &grads, config.optimizer, config.learning_rate);
            if network
                .layers()
                .iter()
                .filter_map(Layer::parameters)
                .any(|(w, b)| !w.is_finite() || !b.is_finite())
            {
                return Err(Error::Diverged { step, loss: f64::NAN });
            }
            epoch_loss += loss * batch.len() as f64;
            step += 1;
        }
        epoch_losses.push(epoch_loss / train.len() as f64);
    }
    let metrics = if test.is_empty() {
        None
    } else {
        Some(evaluate(&network, test)?)
    };
    let mut provenance = initial.provenance.clone();
    provenance.train_seed = config.seed;
    provenance.subsample_id = config.subsample_id;
    provenance.train_config = Some(config.clone());
    provenance.epoch_losses = epoch_losses;
    provenance.metrics = metrics;
    Ok(ModelBundle {
        spec: initial.spec.clone(),
        network,
        provenance,
    })
}
