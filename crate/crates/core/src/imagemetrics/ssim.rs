use serde::{Deserialize, Serialize};

use super::{normalize_map, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    /// Tiles the map; partial tiles at the right/bottom edge are ignored.
    NonOverlapping,
    /// Every window position at stride 1.
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub mode: WindowMode,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 8,
            mode: WindowMode::NonOverlapping,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

fn window_ssim(a: &Grid, b: &Grid, y0: usize, x0: usize, side: usize, c1: f64, c2: f64) -> f64 {
    let n = (side * side) as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            sa += a.get(y, x);
            sb += b.get(y, x);
        }
    }
    let (mu_a, mu_b) = (sa / n, sb / n);
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for y in y0..y0 + side {
        for x in x0..x0 + side {
            let da = a.get(y, x) - mu_a;
            let db = b.get(y, x) - mu_b;
            vaa += da * da;
            vbb += db * db;
            vab += da * db;
        }
    }
    let (var_a, var_b, cov) = (vaa / n, vbb / n, vab / n);
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean SSIM over windows of two maps, compared as given.
pub fn ssim(a: &Grid, b: &Grid, config: &SsimConfig) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::InputShape {
            expected: vec![a.height, a.width],
            actual: vec![b.height, b.width],
        });
    }
    let side = config.window;
    if side < 2 || side > a.height.min(a.width) {
        return Err(Error::Config(format!(
            "SSIM window {side} must lie in 2..={}",
            a.height.min(a.width)
        )));
    }
    let (c1, c2) = (config.c1(), config.c2());
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::Config("SSIM stabilization constants must be positive".into()));
    }
    let starts = |extent: usize| -> Vec<usize> {
        match config.mode {
            WindowMode::NonOverlapping => (0..extent / side).map(|i| i * side).collect(),
            WindowMode::Sliding => (0..=extent - side).collect(),
        }
    };
    let (ys, xs) = (starts(a.height), starts(a.width));
    let mut total = 0.0;
    for &y in &ys {
        for &x in &xs {
            total += window_ssim(a, b, y, x, side, c1, c2);
        }
    }
    Ok(total / (ys.len() * xs.len()) as f64)
}

/// SSIM after min-max normalizing both maps to `[0, 1]`.
pub fn ssim_normalized(a: &Grid, b: &Grid, config: &SsimConfig) -> Result<f64> {
    ssim(&normalize_map(a)?, &normalize_map(b)?, config)
}
