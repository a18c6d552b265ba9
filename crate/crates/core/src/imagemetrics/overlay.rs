use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_png, Grid};
use crate::error::{Error, Result};
use crate::netcore::Tensor;

/// Blend weight at the strongest map value.
pub const OVERLAY_ALPHA: f32 = 0.6;

const GREEN: [f32; 3] = [0.0, 1.0, 0.0];
const RED: [f32; 3] = [1.0, 0.0, 0.0];
const HEAT: [f32; 3] = [1.0, 0.8, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayStyle {
    /// Green for positive contributions, red for negative.
    Signed,
    /// One hue for non-negative maps; negative values are not drawn.
    Heat,
}

/// Alpha-blends `map` over `image` with opacity proportional to
/// `|value| / max|value|`.
pub fn blend_overlay(image: &Tensor, map: &Grid, style: OverlayStyle) -> Result<Tensor> {
    let [3, h, w] = *image.shape() else {
        return Err(Error::InputShape {
            expected: vec![3, map.height, map.width],
            actual: image.shape().to_vec(),
        });
    };
    if (h, w) != map.dims() {
        return Err(Error::InputShape {
            expected: vec![3, map.height, map.width],
            actual: image.shape().to_vec(),
        });
    }
    let scale = map.max_abs();
    let mut out = image.clone();
    if scale == 0.0 {
        return Ok(out);
    }
    let plane = h * w;
    let data = out.data_mut();
    for (i, &v) in map.values.iter().enumerate() {
        let (color, magnitude) = match style {
            OverlayStyle::Signed if v < 0.0 => (RED, -v),
            OverlayStyle::Signed => (GREEN, v),
            OverlayStyle::Heat => (HEAT, v.max(0.0)),
        };
        let alpha = OVERLAY_ALPHA * (magnitude / scale) as f32;
        if alpha == 0.0 {
            continue;
        }
        for c in 0..3 {
            let p = &mut data[c * plane + i];
            *p = (1.0 - alpha) * *p + alpha * color[c];
        }
    }
    Ok(out)
}

pub fn render_overlay(image: &Tensor, map: &Grid, style: OverlayStyle, path: impl AsRef<Path>) -> Result<()> {
    write_png(&blend_overlay(image, map, style)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagemetrics::read_png;

    fn image() -> Tensor {
        let data = (0..3 * 16).map(|i| ((i * 37) % 255) as f32 / 255.0).collect();
        Tensor::new(vec![3, 4, 4], data).unwrap()
    }

    #[test]
    fn zero_map_leaves_image_unchanged() {
        let out = blend_overlay(&image(), &Grid::zeros(4, 4), OverlayStyle::Signed).unwrap();
        assert_eq!(out, image());
    }

    #[test]
    fn positive_map_adds_no_red() {
        let map = Grid::new(4, 4, (0..16).map(|v| v as f64).collect()).unwrap();
        let img = image();
        let out = blend_overlay(&img, &map, OverlayStyle::Signed).unwrap();
        for i in 0..16 {
            assert!(out.data()[i] <= img.data()[i]);
            assert!(out.data()[16 + i] >= img.data()[16 + i]);
        }
    }

    #[test]
    fn negative_values_pull_towards_red() {
        let mut values = vec![0.0; 16];
        values[5] = -2.0;
        let out = blend_overlay(&image(), &Grid::new(4, 4, values).unwrap(), OverlayStyle::Signed).unwrap();
        let img = image();
        let expect_r = (1.0 - OVERLAY_ALPHA) * img.data()[5] + OVERLAY_ALPHA;
        assert!((out.data()[5] - expect_r).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        assert!(blend_overlay(&image(), &Grid::zeros(4, 5), OverlayStyle::Heat).is_err());
    }

    #[test]
    fn png_round_trip_is_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.png");
        let map = Grid::new(4, 4, (0..16).map(|v| v as f64 - 8.0).collect()).unwrap();
        render_overlay(&image(), &map, OverlayStyle::Signed, &path).unwrap();
        let decoded = read_png(&path).unwrap();
        let blended = blend_overlay(&image(), &map, OverlayStyle::Signed).unwrap();
        for (a, b) in decoded.data().iter().zip(blended.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0 + 1e-6);
        }
    }
}
