use std::fs;
use std::path::Path;

use image::RgbImage;

use super::Grid;
use crate::error::{Error, Result};
use crate::netcore::Tensor;

/// 3×H×W tensor in `[0, 1]` to 8-bit RGB (rounded, clamped).
pub fn tensor_to_rgb(t: &Tensor) -> Result<RgbImage> {
    let [3, h, w] = *t.shape() else {
        return Err(Error::Domain(format!("expected a 3×H×W image, got {:?}", t.shape())));
    };
    let plane = h * w;
    let d = t.data();
    let quantize = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        image::Rgb([quantize(d[i]), quantize(d[plane + i]), quantize(d[2 * plane + i])])
    }))
}

pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    let mut data = vec![0.0f32; 3 * plane];
    for (x, y, p) in img.enumerate_pixels() {
        let i = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * plane + i] = p.0[c] as f32 / 255.0;
        }
    }
    Tensor::from_parts(vec![3, h, w], data)
}

pub fn write_png(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    tensor_to_rgb(t)?
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

pub fn read_png(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(rgb_to_tensor(&img.to_rgb8()))
}

/// One CSV line per row, no header. Values are written in shortest
/// round-trip form.
pub fn write_grid_csv(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for row in grid.values.chunks(grid.width) {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| Error::Decode {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
    }
    let bytes = writer.into_inner().expect("in-memory writer");
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_grid_csv(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let decode = |message: String| Error::Decode {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| decode(e.to_string()))?;
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for record in reader.records() {
        let record = record.map_err(|e| decode(e.to_string()))?;
        if *width.get_or_insert(record.len()) != record.len() {
            return Err(decode(format!("row {height} has {} columns", record.len())));
        }
        for field in record.iter() {
            values.push(
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| decode(format!("{field:?}: {e}")))?,
            );
        }
        height += 1;
    }
    Grid::new(height, width.unwrap_or(0), values)
}
