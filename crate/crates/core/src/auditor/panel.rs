use std::path::Path;

use crate::error::{Error, Result};
use crate::imagemetrics::{blend_overlay, write_png, Grid, OverlayStyle};
use crate::netcore::Tensor;

/// White columns between panel tiles.
pub const PANEL_GAP: usize = 2;

/// Writes the original image followed by one overlay per map, left to right.
pub fn write_panel(image: &Tensor, maps: &[Grid], style: OverlayStyle, path: impl AsRef<Path>) -> Result<()> {
    let [3, h, w] = *image.shape() else {
        return Err(Error::InputShape {
            expected: vec![3, 0, 0],
            actual: image.shape().to_vec(),
        });
    };
    let mut tiles = vec![image.clone()];
    for map in maps {
        tiles.push(blend_overlay(image, map, style)?);
    }
    let width = tiles.len() * w + (tiles.len() - 1) * PANEL_GAP;
    let mut data = vec![1.0f32; 3 * h * width];
    for (t, tile) in tiles.iter().enumerate() {
        let x0 = t * (w + PANEL_GAP);
        for c in 0..3 {
            for y in 0..h {
                let src = &tile.data()[(c * h + y) * w..(c * h + y + 1) * w];
                let start = (c * h + y) * width + x0;
                data[start..start + w].copy_from_slice(src);
            }
        }
    }
    write_png(&Tensor::new(vec![3, h, width], data)?, path)
}
