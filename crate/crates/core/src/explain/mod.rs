//! Grad-CAM and Kernel SHAP saliency maps, with an exact Shapley oracle.

mod gradcam;
mod shap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagemetrics::Grid;
use crate::netcore::{Network, Tensor};

pub use gradcam::{gradcam, upsample_bilinear, GradCam};
pub use shap::{
    exact_shapley, kernel_shap, shap_game, shap_kernel_weight, Attribution, Background, KernelShapConfig, Sampling,
    ShapOutput, EXACT_MAX_FEATURES, GRAY_BACKGROUND,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[serde(rename = "gradcam")]
    GradCam,
    KernelShap,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::GradCam => "gradcam",
            Method::KernelShap => "kernel_shap",
        }
    }
}

/// A relevance grid at input resolution. Signed for Kernel SHAP,
/// non-negative for Grad-CAM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub values: Grid,
    pub method: Method,
    pub target_class: usize,
    pub model_id: String,
}

impl SaliencyMap {
    pub fn with_model_id(mut self, id: impl Into<String>) -> Self {
        self.model_id = id.into();
        self
    }
}

/// Assignment of every pixel to one of `d` features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    height: usize,
    width: usize,
    labels: Vec<usize>,
    d: usize,
}

impl Segmentation {
    /// Labels must cover exactly `0..d` with no empty segment.
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::InputShape {
                expected: vec![height, width],
                actual: vec![labels.len()],
            });
        }
        let d = labels.iter().max().unwrap() + 1;
        let mut seen = vec![false; d];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Domain(format!("segment {missing} of {d} is empty")));
        }
        Ok(Self {
            height,
            width,
            labels,
            d,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, y: usize, x: usize) -> usize {
        self.labels[y * self.width + x]
    }

    pub fn segment_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.d];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

fn grid_cuts(n: usize, k: usize) -> Vec<usize> {
    // cell i spans cuts[i]..cuts[i+1]; the remainder goes to the last cell
    let base = n / k;
    let mut cuts: Vec<usize> = (0..k).map(|i| i * base).collect();
    cuts.push(n);
    cuts
}

/// `grid_k × grid_k` rectangular cells, row-major labels.
pub fn grid_segmentation(image: &Tensor, grid_k: usize) -> Result<Segmentation> {
    let (h, w) = image_dims(image)?;
    if grid_k == 0 {
        return Err(Error::Config("grid_k must be at least 1".into()));
    }
    if grid_k > h || grid_k > w {
        return Err(Error::Size(format!("grid_k {grid_k} exceeds image side ({h}×{w})")));
    }
    let (rows, cols) = (grid_cuts(h, grid_k), grid_cuts(w, grid_k));
    let cell = |cuts: &[usize], v: usize| cuts.partition_point(|&c| c <= v) - 1;
    let labels = (0..h * w)
        .map(|p| cell(&rows, p / w) * grid_k + cell(&cols, p % w))
        .collect();
    Segmentation::new(h, w, labels)
}

pub(crate) fn image_dims(image: &Tensor) -> Result<(usize, usize)> {
    match image.shape() {
        [_, h, w] => Ok((*h, *w)),
        s => Err(Error::InputShape {
            expected: vec![3, 0, 0],
            actual: s.to_vec(),
        }),
    }
}

/// Included segments keep their pixels; excluded ones take `background`
/// (one value per channel).
pub fn mask_image(
    image: &Tensor,
    segmentation: &Segmentation,
    coalition: &[bool],
    background: &[f32],
) -> Result<Tensor> {
    let (h, w) = image_dims(image)?;
    let c = image.shape()[0];
    if segmentation.dims() != (h, w) {
        return Err(Error::InputShape {
            expected: vec![h, w],
            actual: vec![segmentation.height, segmentation.width],
        });
    }
    if coalition.len() != segmentation.d() {
        return Err(Error::InputShape {
            expected: vec![segmentation.d()],
            actual: vec![coalition.len()],
        });
    }
    if background.len() != c {
        return Err(Error::InputShape {
            expected: vec![c],
            actual: vec![background.len()],
        });
    }
    let src = image.data();
    let mut data = Vec::with_capacity(src.len());
    for (ch, &bg) in background.iter().enumerate() {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        data.extend(
            plane
                .iter()
                .zip(&segmentation.labels)
                .map(|(&v, &l)| if coalition[l] { v } else { bg }),
        );
    }
    Tensor::new(image.shape().to_vec(), data)
}

/// Paints each pixel with its segment's attribution.
pub fn attribution_to_map(attribution: &Attribution, segmentation: &Segmentation) -> Result<SaliencyMap> {
    if attribution.phi.len() != segmentation.d() {
        return Err(Error::InputShape {
            expected: vec![segmentation.d()],
            actual: vec![attribution.phi.len()],
        });
    }
    let (h, w) = segmentation.dims();
    let values = segmentation.labels.iter().map(|&l| attribution.phi[l]).collect();
    Ok(SaliencyMap {
        values: Grid::new(h, w, values)?,
        method: Method::KernelShap,
        target_class: attribution.target_class,
        model_id: String::new(),
    })
}

/// Everything needed to produce one saliency map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub method: Method,
    pub target_class: usize,
    /// Kernel SHAP only: features are a `grid_k × grid_k` grid.
    pub grid_k: usize,
    pub sampling: Sampling,
    pub background: Background,
    pub output: ShapOutput,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        let shap = KernelShapConfig::default();
        Self {
            method: Method::GradCam,
            target_class: shap.target_class,
            grid_k: 8,
            sampling: shap.sampling,
            background: shap.background,
            output: shap.output,
            seed: shap.seed,
        }
    }
}

impl ExplainConfig {
    pub fn shap_config(&self) -> KernelShapConfig {
        KernelShapConfig {
            sampling: self.sampling,
            background: self.background,
            seed: self.seed,
            target_class: self.target_class,
            output: self.output,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Runs the configured method on one image.
pub fn explain_image(network: &Network, image: &Tensor, config: &ExplainConfig) -> Result<SaliencyMap> {
    match config.method {
        Method::GradCam => Ok(gradcam(network, image, config.target_class)?.map),
        Method::KernelShap => {
            let seg = grid_segmentation(image, config.grid_k)?;
            attribution_to_map(&kernel_shap(network, image, &seg, &config.shap_config())?, &seg)
        }
    }
}
