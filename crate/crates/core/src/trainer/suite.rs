use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{train, Optimizer, TrainConfig};
use crate::error::{Error, Result};
use crate::models::{ModelBundle, NetworkSpec};
use crate::seed;
use crate::synthgen::{expand_class, subsample_balanced, Dataset, Label, LabeledImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    Sgd,
    Adam,
}

/// Ranges sampled independently for each suite member. Equal bounds pin a
/// hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub optimizers: Vec<OptimizerChoice>,
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub momentum: (f64, f64),
    pub beta1: (f64, f64),
    pub beta2: (f64, f64),
    pub epochs: (usize, usize),
    pub batch_sizes: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            optimizers: vec![OptimizerChoice::Sgd, OptimizerChoice::Adam],
            learning_rate: (5e-4, 2e-3),
            momentum: (0.8, 0.95),
            beta1: (0.85, 0.95),
            beta2: (0.99, 0.999),
            epochs: (16, 28),
            batch_sizes: vec![8, 16],
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

impl SearchSpace {
    fn validate(&self) -> Result<()> {
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if lo <= hi {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} range ({lo}, {hi}) is reversed")))
            }
        };
        if self.optimizers.is_empty() || self.batch_sizes.is_empty() {
            return Err(Error::Config("search space needs an optimizer and a batch size".into()));
        }
        if !(self.learning_rate.0 > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        ordered("learning_rate", self.learning_rate)?;
        ordered("momentum", self.momentum)?;
        ordered("beta1", self.beta1)?;
        ordered("beta2", self.beta2)?;
        if self.epochs.0 == 0 || self.epochs.0 > self.epochs.1 {
            return Err(Error::Config("epoch range must be non-empty and ≥ 1".into()));
        }
        Ok(())
    }

    fn sample(&self, rng: &mut impl Rng, seed: u64, subsample_id: u64) -> TrainConfig {
        let choice = self.optimizers[rng.gen_range(0..self.optimizers.len())];
        let (lo, hi) = self.learning_rate;
        let learning_rate = uniform(rng, (lo.ln(), hi.ln())).exp();
        let optimizer = match choice {
            OptimizerChoice::Sgd => Optimizer::SgdMomentum {
                momentum: uniform(rng, self.momentum),
            },
            OptimizerChoice::Adam => Optimizer::Adam {
                beta1: uniform(rng, self.beta1),
                beta2: uniform(rng, self.beta2),
            },
        };
        TrainConfig {
            optimizer,
            learning_rate,
            epochs: rng.gen_range(self.epochs.0..=self.epochs.1),
            batch_size: self.batch_sizes[rng.gen_range(0..self.batch_sizes.len())],
            seed,
            subsample_id: Some(subsample_id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Each member derives its own subsample, initialization and training seeds.
    PerModel,
    /// Every member uses the master seed directly.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n_models: usize,
    /// Members cycle through this many balanced subsamples.
    pub n_subsets: usize,
    pub per_class: usize,
    /// Minority class is augmented to this multiple of its size first.
    pub minority_expansion: f64,
    pub network: NetworkSpec,
    pub search_space: SearchSpace,
    pub seed_policy: SeedPolicy,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub model_id: String,
    pub subset_id: u64,
    pub optimizer: String,
    pub learning_rate: f64,
    pub momentum: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub auc: f64,
    pub recall: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub config: SuiteConfig,
    pub rows: Vec<SuiteRow>,
    pub mean_auc: f64,
    /// Population variance (divisor n).
    pub auc_variance: f64,
    pub auc_std: f64,
    pub mean_recall: f64,
    pub recall_variance: f64,
    pub recall_std: f64,
    pub mean_accuracy: f64,
    /// A test image counts as consistently misclassified when at least this
    /// many members get it wrong: ⌈5n/6⌉.
    pub misclassification_threshold: usize,
    pub consistently_misclassified: Vec<String>,
}

impl SuiteSummary {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Config(format!("csv: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

pub struct Suite {
    pub models: Vec<ModelBundle>,
    pub summary: SuiteSummary,
}

/// Mean and population variance by the two-pass formula.
pub(crate) fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Trains `n_models` members, each on its own balanced subsample with its own
/// hyperparameters, and summarizes them on `test`.
pub fn train_suite(pool: &[LabeledImage], test: &[LabeledImage], config: &SuiteConfig) -> Result<Suite> {
    if config.n_models < 2 {
        return Err(Error::Config(format!(
            "a suite needs ≥ 2 models, got {}",
            config.n_models
        )));
    }
    if config.n_subsets == 0 {
        return Err(Error::Config("n_subsets must be ≥ 1".into()));
    }
    config.search_space.validate()?;
    let minority = if Dataset::count(pool, Label::Melanoma) <= Dataset::count(pool, Label::Naevus) {
        Label::Melanoma
    } else {
        Label::Naevus
    };
    let expanded = expand_class(
        pool,
        minority,
        config.minority_expansion,
        seed::derive(config.master_seed, 0xA0),
    )?;

    let mut models = Vec::with_capacity(config.n_models);
    let mut rows = Vec::with_capacity(config.n_models);
    for i in 0..config.n_models {
        let (member_seed, subset_id) = match config.seed_policy {
            SeedPolicy::PerModel => (
                seed::derive(config.master_seed, i as u64 + 1),
                (i % config.n_subsets) as u64,
            ),
            SeedPolicy::Shared => (config.master_seed, 0),
        };
        let annotate = |e: Error| Error::SuiteMember {
            index: i,
            source: Box::new(e),
        };
        let subset_seed = seed::derive(config.master_seed ^ 0x5B5E7, subset_id);
        let subset = subsample_balanced(&expanded, config.per_class, subset_seed).map_err(annotate)?;
        let mut rng = seed::rng(member_seed, 3);
        let train_config = config
            .search_space
            .sample(&mut rng, seed::derive(member_seed, 2), subset_id);
        let spec = NetworkSpec {
            init_seed: seed::derive(member_seed, 1),
            ..config.network.clone()
        };
        let initial = ModelBundle::initialized(spec, format!("model_{i:02}")).map_err(annotate)?;
        let trained = train(&initial, &subset, test, &train_config).map_err(annotate)?;
        let metrics = trained
            .provenance
            .metrics
            .as_ref()
            .ok_or_else(|| annotate(Error::Size("empty test split".into())))?;
        let (optimizer, momentum, beta1, beta2) = match train_config.optimizer {
            Optimizer::SgdMomentum { momentum } => ("sgd", Some(momentum), None, None),
            Optimizer::Adam { beta1, beta2 } => ("adam", None, Some(beta1), Some(beta2)),
        };
        rows.push(SuiteRow {
            model_id: trained.id().to_string(),
            subset_id,
            optimizer: optimizer.into(),
            learning_rate: train_config.learning_rate,
            momentum,
            beta1,
            beta2,
            epochs: train_config.epochs,
            batch_size: train_config.batch_size,
            auc: metrics.auc,
            recall: metrics.recall,
            accuracy: metrics.accuracy,
        });
        models.push(trained);
    }

    let aucs: Vec<f64> = rows.iter().map(|r| r.auc).collect();
    let recalls: Vec<f64> = rows.iter().map(|r| r.recall).collect();
    let (mean_auc, auc_variance) = mean_variance(&aucs);
    let (mean_recall, recall_variance) = mean_variance(&recalls);
    let mean_accuracy = rows.iter().map(|r| r.accuracy).sum::<f64>() / rows.len() as f64;

    let n = config.n_models;
    let threshold = (5 * n).div_ceil(6);
    let mut wrong: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &models {
        let metrics = m.provenance.metrics.as_ref().unwrap();
        for ((id, &p), &label) in metrics.test_ids.iter().zip(&metrics.probabilities).zip(&metrics.labels) {
            let predicted = u8::from(p >= metrics.threshold);
            *wrong.entry(id.as_str()).or_default() += usize::from(predicted != label);
        }
    }
    let consistently_misclassified = test
        .iter()
        .filter(|img| wrong.get(img.id.as_str()).copied().unwrap_or(0) >= threshold)
        .map(|img| img.id.clone())
        .collect();

    Ok(Suite {
        models,
        summary: SuiteSummary {
            config: config.clone(),
            rows,
            mean_auc,
            auc_variance,
            auc_std: auc_variance.sqrt(),
            mean_recall,
            recall_variance,
            recall_std: recall_variance.sqrt(),
            mean_accuracy,
            misclassification_threshold: threshold,
            consistently_misclassified,
        },
    })
}
