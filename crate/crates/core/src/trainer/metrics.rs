use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{logits, softmax, Network};
use crate::synthgen::{Label, LabeledImage};

/// Confusion counts with melanoma as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub auc: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub confusion: Confusion,
    pub test_ids: Vec<String>,
    /// Melanoma probability per test image, aligned with `test_ids`.
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
}

fn class_counts(labels: &[u8]) -> Result<(usize, usize)> {
    let mut pos = 0;
    let mut neg = 0;
    for &l in labels {
        match l {
            0 => neg += 1,
            1 => pos += 1,
            other => return Err(Error::UndefinedMetric(format!("label {other} is not binary"))),
        }
    }
    Ok((pos, neg))
}

/// Area under the ROC curve as the Mann–Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::UndefinedMetric(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    let (pos, neg) = class_counts(labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the Mann-Whitney U, kept integral so the result is exact.
    let mut twice_u: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u64;
        let tied_neg = (j - i) as u64 - tied_pos;
        twice_u += tied_pos * (2 * negatives_below + tied_neg);
        negatives_below += tied_neg;
        i = j;
    }
    Ok(twice_u as f64 / 2.0 / (pos as f64 * neg as f64))
}

fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// TP / (TP + FN) with melanoma positive; a score at or above `threshold`
/// predicts melanoma.
pub fn recall(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let (pos, _) = class_counts(labels)?;
    if pos == 0 || scores.len() != labels.len() {
        return Err(Error::UndefinedMetric("recall needs at least one positive".into()));
    }
    let c = confusion(scores, labels, threshold);
    Ok(c.tp as f64 / (c.tp + c.fn_) as f64)
}

/// Melanoma probability for one image.
pub fn melanoma_probability(network: &Network, image: &LabeledImage) -> Result<f64> {
    let l = logits(network, &image.image)?;
    Ok(softmax(&l)[Label::Melanoma.index()] as f64)
}

pub fn evaluate(network: &Network, test: &[LabeledImage]) -> Result<MetricsRecord> {
    let probabilities = test
        .iter()
        .map(|img| melanoma_probability(network, img))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<u8> = test.iter().map(|i| i.label.index() as u8).collect();
    let threshold = 0.5;
    let c = confusion(&probabilities, &labels, threshold);
    Ok(MetricsRecord {
        auc: auc(&probabilities, &labels)?,
        recall: recall(&probabilities, &labels, threshold)?,
        accuracy: (c.tp + c.tn) as f64 / labels.len() as f64,
        threshold,
        confusion: c,
        test_ids: test.iter().map(|i| i.id.clone()).collect(),
        probabilities,
        labels,
    })
}
