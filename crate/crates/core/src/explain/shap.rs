use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{logits, softmax, Network, Tensor};
use crate::seed;

use super::{mask_image, Segmentation};

/// Largest feature count for exhaustive enumeration.
pub const EXACT_MAX_FEATURES: usize = 16;

pub const GRAY_BACKGROUND: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Number of coalition draws; duplicates are merged.
    Samples(usize),
    /// Every coalition with its exact kernel weight; `d ≤ 16`.
    Exhaustive,
}

/// Value given to pixels of excluded segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    ChannelMean,
    Gray,
}

impl Background {
    pub fn resolve(self, image: &Tensor) -> Vec<f32> {
        let c = image.shape()[0];
        match self {
            Background::Gray => vec![GRAY_BACKGROUND; c],
            Background::ChannelMean => {
                let plane = image.len() / c;
                image
                    .data()
                    .chunks(plane)
                    .map(|p| (p.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32)
                    .collect()
            }
        }
    }
}

/// The explained model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapOutput {
    Probability,
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelShapConfig {
    pub sampling: Sampling,
    pub background: Background,
    pub seed: u64,
    pub target_class: usize,
    pub output: ShapOutput,
}

impl Default for KernelShapConfig {
    fn default() -> Self {
        Self {
            sampling: Sampling::Samples(2048),
            background: Background::ChannelMean,
            seed: 0,
            target_class: 1,
            output: ShapOutput::Probability,
        }
    }
}

/// Per-feature Shapley estimates. `phi0 + Σ phi == full_value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub phi: Vec<f64>,
    /// Model output with every feature absent.
    pub phi0: f64,
    /// Model output with every feature present.
    pub full_value: f64,
    pub target_class: usize,
    pub sampling: Sampling,
    pub seed: u64,
    /// Coalitions entering the regression after merging duplicates.
    pub unique_coalitions: usize,
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// SHAP kernel `(d−1) / (C(d,s)·s·(d−s))` for `0 < s < d`.
pub fn shap_kernel_weight(d: usize, coalition_size: usize) -> Result<f64> {
    let s = coalition_size;
    if s == 0 || s >= d {
        return Err(Error::ConstraintCoalition(s, d));
    }
    Ok((d - 1) as f64 / (binomial(d, s) * s as f64 * (d - s) as f64))
}

fn coalitions(d: usize, sampling: Sampling, seed_value: u64) -> Result<Vec<(Vec<bool>, f64)>> {
    match sampling {
        Sampling::Exhaustive => {
            if d > EXACT_MAX_FEATURES {
                return Err(Error::Capacity(format!(
                    "exhaustive mode supports at most {EXACT_MAX_FEATURES} features, got {d}"
                )));
            }
            (1..(1u32 << d) - 1)
                .map(|mask| {
                    let z: Vec<bool> = (0..d).map(|i| mask >> i & 1 == 1).collect();
                    let s = mask.count_ones() as usize;
                    Ok((z, shap_kernel_weight(d, s)?))
                })
                .collect()
        }
        Sampling::Samples(n) => {
            if n < d {
                return Err(Error::Config(format!("{n} samples is fewer than the {d} features")));
            }
            // sizes are drawn uniformly, so each draw carries kernel / proposal
            // ∝ 1 / (s·(d−s)) to target the kernel-weighted objective
            let mut merged: BTreeMap<Vec<bool>, f64> = BTreeMap::new();
            for i in 0..n {
                let mut rng = seed::rng(seed_value, i as u64);
                let s = rng.gen_range(1..d);
                let mut z = vec![false; d];
                for j in index::sample(&mut rng, d, s) {
                    z[j] = true;
                }
                *merged.entry(z).or_insert(0.0) += 1.0 / (s * (d - s)) as f64;
            }
            Ok(merged.into_iter().collect())
        }
    }
}

/// Kernel SHAP for an arbitrary set function `value` over `d` players.
///
/// The empty and full coalitions enter as exact constraints by eliminating
/// the last feature from the regression.
pub fn shap_game<F>(d: usize, sampling: Sampling, seed: u64, value: F) -> Result<Attribution>
where
    F: Fn(&[bool]) -> Result<f64> + Sync,
{
    if d < 2 {
        return Err(Error::Config(format!("Kernel SHAP needs at least 2 features, got {d}")));
    }
    let samples = coalitions(d, sampling, seed)?;
    let v0 = value(&vec![false; d])?;
    let v1 = value(&vec![true; d])?;
    let values: Vec<f64> = samples.par_iter().map(|(z, _)| value(z)).collect::<Result<_>>()?;

    let m = d - 1;
    let delta = v1 - v0;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    let mut x = vec![0.0; m];
    for ((z, w), v) in samples.iter().zip(&values) {
        let last = z[m] as u8 as f64;
        for (xi, &zi) in x.iter_mut().zip(z) {
            *xi = zi as u8 as f64 - last;
        }
        let y = v - v0 - last * delta;
        for r in 0..m {
            if x[r] == 0.0 {
                continue;
            }
            let wr = w * x[r];
            b[r] += wr * y;
            for c in 0..m {
                a[(r, c)] += wr * x[c];
            }
        }
    }
    let scale = (0..m).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let chol = a
        .clone()
        .cholesky()
        .filter(|c| scale > 0.0 && (0..m).all(|i| c.l_dirty()[(i, i)].powi(2) > 1e-12 * scale))
        .ok_or_else(|| {
            Error::Solver(format!(
                "{} distinct coalitions do not determine {d} features",
                samples.len()
            ))
        })?;
    let head = chol.solve(&b);
    let mut phi: Vec<f64> = head.iter().copied().collect();
    phi.push(delta - phi.iter().sum::<f64>());
    Ok(Attribution {
        phi,
        phi0: v0,
        full_value: v1,
        target_class: 0,
        sampling,
        seed,
        unique_coalitions: samples.len(),
    })
}

/// Kernel SHAP over the segments of `image`.
pub fn kernel_shap(
    network: &Network,
    image: &Tensor,
    segmentation: &Segmentation,
    config: &KernelShapConfig,
) -> Result<Attribution> {
    let classes = network.num_classes();
    if config.target_class >= classes {
        return Err(Error::Index {
            what: "class",
            index: config.target_class,
            limit: classes,
        });
    }
    let background = config.background.resolve(image);
    let value = |z: &[bool]| -> Result<f64> {
        let masked = mask_image(image, segmentation, z, &background)?;
        let l = logits(network, &masked)?;
        Ok(match config.output {
            ShapOutput::Logit => l[config.target_class] as f64,
            ShapOutput::Probability => softmax(&l)[config.target_class] as f64,
        })
    };
    let mut attribution = shap_game(segmentation.d(), config.sampling, config.seed, value)?;
    attribution.target_class = config.target_class;
    Ok(attribution)
}

/// Shapley values by full enumeration of the `2^d` coalitions.
pub fn exact_shapley<F>(d: usize, value: F) -> Result<Vec<f64>>
where
    F: Fn(&[bool]) -> f64,
{
    if d == 0 || d > EXACT_MAX_FEATURES {
        return Err(Error::Capacity(format!(
            "exact Shapley supports 1..={EXACT_MAX_FEATURES} features, got {d}"
        )));
    }
    let table: Vec<f64> = (0..1u32 << d)
        .map(|mask| value(&(0..d).map(|i| mask >> i & 1 == 1).collect::<Vec<_>>()))
        .collect();
    let fact: Vec<f64> = (0..=d)
        .scan(1.0, |f, i| {
            if i > 0 {
                *f *= i as f64;
            }
            Some(*f)
        })
        .collect();
    let weight: Vec<f64> = (0..d).map(|s| fact[s] * fact[d - s - 1] / fact[d]).collect();
    Ok((0..d)
        .map(|k| {
            let bit = 1u32 << k;
            (0..1u32 << d)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (table[(m | bit) as usize] - table[m as usize]))
                .sum()
        })
        .collect())
}
