//! Map comparison (SSIM), normalization, and rendering of saliency overlays.

mod io;
mod overlay;
mod ssim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{read_grid_csv, read_png, rgb_to_tensor, tensor_to_rgb, write_grid_csv, write_png};
pub use overlay::{blend_overlay, render_overlay, OverlayStyle, OVERLAY_ALPHA};
pub use ssim::{ssim, ssim_normalized, SsimConfig, WindowMode};

/// A real-valued `height × width` grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height * width != values.len() {
            return Err(Error::InputShape {
                expected: vec![height, width],
                actual: vec![values.len()],
            });
        }
        Ok(Self { height, width, values })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Min-max normalization to `[0, 1]`. Constant maps become all zeros.
pub fn normalize_map(map: &Grid) -> Result<Grid> {
    if map.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("map contains non-finite values".into()));
    }
    let (min, max) = map
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = max - min;
    if !(range > 0.0) {
        return Ok(Grid::zeros(map.height, map.width));
    }
    Ok(map.map(|v| (v - min) / range))
}
