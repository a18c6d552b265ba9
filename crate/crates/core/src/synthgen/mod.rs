//! Seeded synthetic dermoscopy-like images with controllable class structure,
//! imbalance, augmentation and plantable dark-corner artifacts.

mod augment;
mod io;
mod render;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::Tensor;
use crate::seed;

pub use augment::{augment, expand_class, subsample_balanced, Transform};
pub use io::{read_dataset, write_dataset, MANIFEST_FILE};
pub use render::{apply_dark_corners, VIGNETTE_START};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Naevus,
    Melanoma,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Naevus, Label::Melanoma];

    /// Class index: naevus 0, melanoma 1.
    pub fn index(self) -> usize {
        match self {
            Label::Naevus => 0,
            Label::Melanoma => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Naevus => "naevus",
            Label::Melanoma => "melanoma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Artifact {
    None,
    /// Vignette applied to naevi with probability `p0`, melanomas with `p1`.
    DarkCorners {
        strength: f64,
        p0: f64,
        p1: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionParams {
    /// Lesion radius range as a fraction of the shorter image side.
    pub radius_min: f64,
    pub radius_max: f64,
    /// Range of boundary perturbation amplitude for melanomas (naevi use 0).
    pub melanoma_irregularity: (f64, f64),
    /// How far melanoma tones move from the naevus brown, in `[0, 1]`.
    pub tone_contrast: f64,
    /// Standard deviation of per-pixel noise.
    pub noise: f64,
}

impl Default for LesionParams {
    fn default() -> Self {
        Self {
            radius_min: 0.16,
            radius_max: 0.28,
            melanoma_irregularity: (0.03, 0.2),
            tone_contrast: 0.4,
            noise: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub height: usize,
    pub width: usize,
    pub naevi: usize,
    pub melanoma: usize,
    /// Images per class held out as a balanced test split.
    pub test_per_class: usize,
    pub lesion: LesionParams,
    pub artifact: Artifact,
    pub seed: u64,
}

impl GenConfig {
    pub fn clean(seed: u64) -> Self {
        Self {
            height: 64,
            width: 64,
            naevi: 300,
            melanoma: 300,
            test_per_class: 50,
            lesion: LesionParams::default(),
            artifact: Artifact::None,
            seed,
        }
    }

    /// Dark corners on 90% of melanomas and 10% of naevi.
    pub fn biased(seed: u64) -> Self {
        Self {
            artifact: Artifact::DarkCorners {
                strength: 0.8,
                p0: 0.1,
                p1: 0.9,
            },
            ..Self::clean(seed)
        }
    }

    /// Roughly the 8.8 : 1 naevus to melanoma ratio of the reference data.
    pub fn imbalanced(seed: u64) -> Self {
        Self {
            naevi: 540,
            melanoma: 61,
            test_per_class: 20,
            ..Self::clean(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config(format!(
                "image size {}×{} is below 8×8",
                self.height, self.width
            )));
        }
        if self.naevi + self.melanoma == 0 {
            return Err(Error::Config("no images requested".into()));
        }
        if self.test_per_class > 0 {
            for (name, count) in [("naevi", self.naevi), ("melanoma", self.melanoma)] {
                if count < self.test_per_class {
                    return Err(Error::Config(format!(
                        "balanced test split needs {} {name}, only {count} requested",
                        self.test_per_class
                    )));
                }
            }
        }
        let l = &self.lesion;
        if !(0.0 < l.radius_min && l.radius_min <= l.radius_max && l.radius_max < 0.5) {
            return Err(Error::Config(
                "lesion radius range must satisfy 0 < min ≤ max < 0.5".into(),
            ));
        }
        if !(l.melanoma_irregularity.0 >= 0.0 && l.melanoma_irregularity.0 <= l.melanoma_irregularity.1) {
            return Err(Error::Config("melanoma irregularity range is invalid".into()));
        }
        unit("tone_contrast", l.tone_contrast)?;
        if !(l.noise >= 0.0) {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        if let Artifact::DarkCorners { strength, p0, p1 } = self.artifact {
            unit("strength", strength)?;
            unit("p0", p0)?;
            unit("p1", p1)?;
        }
        Ok(())
    }

    fn label_of(&self, index: usize) -> Label {
        if index < self.naevi {
            Label::Naevus
        } else {
            Label::Melanoma
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    /// 3×H×W, values in `[0, 1]`.
    pub image: Tensor,
    pub label: Label,
    /// True iff the dark-corner operator was applied to the source image.
    pub artifact: bool,
    /// Id of the generated image this one derives from (itself if original).
    pub source_id: String,
    pub transform: Option<Transform>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub label: Label,
    pub artifact: bool,
    pub split: Split,
    pub source_id: String,
    pub transform: Option<Transform>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: GenConfig,
    pub records: Vec<ImageRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GenConfig,
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
}

impl Dataset {
    pub fn manifest(&self) -> DatasetManifest {
        let record = |img: &LabeledImage, split| ImageRecord {
            id: img.id.clone(),
            label: img.label,
            artifact: img.artifact,
            split,
            source_id: img.source_id.clone(),
            transform: img.transform,
        };
        DatasetManifest {
            config: self.config.clone(),
            records: self
                .train
                .iter()
                .map(|i| record(i, Split::Train))
                .chain(self.test.iter().map(|i| record(i, Split::Test)))
                .collect(),
        }
    }

    pub fn count(images: &[LabeledImage], label: Label) -> usize {
        images.iter().filter(|i| i.label == label).count()
    }
}

/// Renders image `index` of the dataset described by `config`.
pub fn generate_image(config: &GenConfig, index: usize) -> LabeledImage {
    let mut rng = seed::rng(config.seed, index as u64);
    let label = config.label_of(index);
    let mut image = render::render_lesion(label, &config.lesion, config.height, config.width, &mut rng);
    let artifact = match config.artifact {
        Artifact::None => false,
        Artifact::DarkCorners { strength, p0, p1 } => {
            let p = if label == Label::Melanoma { p1 } else { p0 };
            let hit = rng.gen_bool(p);
            if hit {
                apply_dark_corners(&mut image, strength);
            }
            hit
        }
    };
    let id = format!("img{index:05}");
    LabeledImage {
        source_id: id.clone(),
        id,
        image,
        label,
        artifact,
        transform: None,
    }
}

/// Generates every image and holds out `test_per_class` of each class.
pub fn generate_dataset(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let total = config.naevi + config.melanoma;
    let images: Vec<LabeledImage> = (0..total).into_par_iter().map(|i| generate_image(config, i)).collect();

    let mut is_test = vec![false; total];
    for (class, range) in [(0u64, 0..config.naevi), (1, config.naevi..total)] {
        let mut idx: Vec<usize> = range.collect();
        idx.shuffle(&mut seed::rng(config.seed, u64::MAX - class));
        for &i in idx.iter().take(config.test_per_class) {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = images.into_iter().zip(is_test).partition(|(_, t)| *t);
    Ok(Dataset {
        config: config.clone(),
        train: train.into_iter().map(|(i, _)| i).collect(),
        test: test.into_iter().map(|(i, _)| i).collect(),
    })
}

#[cfg(test)]
mod tests;
