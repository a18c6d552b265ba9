use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{Label, LabeledImage};
use crate::error::{Error, Result};
use crate::netcore::Tensor;
use crate::seed;

/// Non-identity elements of the square's symmetry group. All of them map
/// corners to corners and preserve the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    FlipHorizontal,
    FlipVertical,
    Rotate90,
    Rotate180,
    Rotate270,
    Transpose,
    AntiTranspose,
}

impl Transform {
    pub const ALL: [Transform; 7] = [
        Transform::FlipHorizontal,
        Transform::FlipVertical,
        Transform::Rotate90,
        Transform::Rotate180,
        Transform::Rotate270,
        Transform::Transpose,
        Transform::AntiTranspose,
    ];

    /// True if the transform keeps `H × W` for non-square images.
    pub fn preserves_shape(self) -> bool {
        matches!(
            self,
            Transform::FlipHorizontal | Transform::FlipVertical | Transform::Rotate180
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Transform::FlipHorizontal => "fliph",
            Transform::FlipVertical => "flipv",
            Transform::Rotate90 => "rot90",
            Transform::Rotate180 => "rot180",
            Transform::Rotate270 => "rot270",
            Transform::Transpose => "transpose",
            Transform::AntiTranspose => "antitranspose",
        }
    }

    /// Source pixel `(y, x)` for output pixel `(y, x)` of an `n × m` input.
    fn source(self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            Transform::FlipHorizontal => (y, w - 1 - x),
            Transform::FlipVertical => (h - 1 - y, x),
            Transform::Rotate90 => (h - 1 - x, y),
            Transform::Rotate180 => (h - 1 - y, w - 1 - x),
            Transform::Rotate270 => (x, w - 1 - y),
            Transform::Transpose => (x, y),
            Transform::AntiTranspose => (h - 1 - x, w - 1 - y),
        }
    }

    pub fn apply(self, image: &Tensor) -> Tensor {
        let [c, h, w] = *image.shape() else {
            panic!("transform expects a C×H×W tensor")
        };
        let (oh, ow) = if self.preserves_shape() { (h, w) } else { (w, h) };
        let src = image.data();
        let mut data = Vec::with_capacity(src.len());
        for ch in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    let (sy, sx) = self.source(y, x, h, w);
                    data.push(src[(ch * h + sy) * w + sx]);
                }
            }
        }
        Tensor::from_parts(vec![c, oh, ow], data)
    }
}

/// Up to `count` distinct flipped/rotated copies of `image`, chosen by `seed`.
/// Non-square images only receive shape-preserving transforms.
pub fn augment(image: &LabeledImage, count: usize, seed: u64) -> Vec<LabeledImage> {
    let shape = image.image.shape();
    let square = shape[1] == shape[2];
    let mut choices: Vec<Transform> = Transform::ALL
        .into_iter()
        .filter(|t| square || t.preserves_shape())
        .collect();
    choices.shuffle(&mut seed::rng(seed, 0));
    choices
        .into_iter()
        .take(count)
        .map(|t| LabeledImage {
            id: format!("{}_{}", image.id, t.name()),
            image: t.apply(&image.image),
            label: image.label,
            artifact: image.artifact,
            source_id: image.source_id.clone(),
            transform: Some(t),
        })
        .collect()
}

/// Grows `label` to about `factor ×` its size by augmentation; other images
/// pass through. Extra copies are spread evenly across the class.
pub fn expand_class(images: &[LabeledImage], label: Label, factor: f64, seed: u64) -> Result<Vec<LabeledImage>> {
    if !(1.0..=8.0).contains(&factor) {
        return Err(Error::Config(format!("expansion factor {factor} must lie in [1, 8]")));
    }
    let members: Vec<&LabeledImage> = images.iter().filter(|i| i.label == label).collect();
    let n = members.len();
    let extra = ((n as f64) * factor).round() as usize - n;
    let mut out = images.to_vec();
    if n == 0 || extra == 0 {
        return Ok(out);
    }
    let (per, remainder) = (extra / n, extra % n);
    for (i, img) in members.into_iter().enumerate() {
        let count = per + usize::from(i < remainder);
        out.extend(augment(img, count, seed::derive(seed, i as u64)));
    }
    Ok(out)
}

/// `n_per_class` images of each class drawn uniformly without replacement.
/// Output keeps the input order.
pub fn subsample_balanced(images: &[LabeledImage], n_per_class: usize, seed: u64) -> Result<Vec<LabeledImage>> {
    let mut by_class: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, img) in images.iter().enumerate() {
        by_class.entry(img.label).or_default().push(i);
    }
    let mut keep = vec![false; images.len()];
    for label in Label::ALL {
        let members = by_class.get(&label).map(Vec::as_slice).unwrap_or(&[]);
        if members.len() < n_per_class {
            return Err(Error::Size(format!(
                "{} {} images available, {n_per_class} requested",
                members.len(),
                label.name()
            )));
        }
        let mut rng = seed::rng(seed, label.index() as u64);
        for j in index::sample(&mut rng, members.len(), n_per_class) {
            keep[members[j]] = true;
        }
    }
    Ok(images
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(i, _)| i.clone())
        .collect())
}
