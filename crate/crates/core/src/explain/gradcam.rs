use crate::error::{Error, Result};
use crate::imagemetrics::Grid;
use crate::netcore::{backward_to_feature_maps, forward_pass, Network, Tensor};

use super::{image_dims, Method, SaliencyMap};

/// A Grad-CAM map with the quantities it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCam {
    pub map: SaliencyMap,
    /// `α^k_c`, one weight per channel of the last conv layer.
    pub alpha: Vec<f64>,
    /// `Σ_k α^k_c A^k` at feature-map resolution, before the ReLU.
    pub coarse: Grid,
    /// Layer whose output is `A`.
    pub layer_id: usize,
}

/// Grad-CAM on the output of the last conv layer, using the pre-sigmoid
/// logit of `class_index` as the score.
pub fn gradcam(network: &Network, image: &Tensor, class_index: usize) -> Result<GradCam> {
    let layer_id = network
        .last_conv_layer()
        .ok_or_else(|| Error::Architecture("Grad-CAM needs a conv layer".into()))?;
    let (h, w) = image_dims(image)?;
    let trace = forward_pass(network, image)?;
    let grads = backward_to_feature_maps(network, &trace, class_index)?;
    let a = trace.output(layer_id);
    let g = grads.output(layer_id);
    let (k, fh, fw) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let z = (fh * fw) as f64;

    let alpha: Vec<f64> = g
        .data()
        .chunks(fh * fw)
        .map(|plane| plane.iter().map(|&v| v as f64).sum::<f64>() / z)
        .collect();
    let mut coarse = vec![0.0f64; fh * fw];
    for (ch, plane) in a.data().chunks(fh * fw).enumerate().take(k) {
        for (c, &v) in coarse.iter_mut().zip(plane) {
            *c += alpha[ch] * v as f64;
        }
    }
    let coarse = Grid::new(fh, fw, coarse)?;
    let values = upsample_bilinear(&coarse.map(|v| v.max(0.0)), h, w);
    Ok(GradCam {
        map: SaliencyMap {
            values,
            method: Method::GradCam,
            target_class: class_index,
            model_id: String::new(),
        },
        alpha,
        coarse,
        layer_id,
    })
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn upsample_bilinear(src: &Grid, height: usize, width: usize) -> Grid {
    let (sh, sw) = src.dims();
    let coord = |dst: usize, n_dst: usize, n_src: usize| {
        let pos = ((dst as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5).clamp(0.0, (n_src - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_src - 1);
        (lo, hi, pos - lo as f64)
    };
    let cols: Vec<_> = (0..width).map(|x| coord(x, width, sw)).collect();
    let mut values = Vec::with_capacity(height * width);
    for y in 0..height {
        let (y0, y1, fy) = coord(y, height, sh);
        for &(x0, x1, fx) in &cols {
            let top = src.get(y0, x0) * (1.0 - fx) + src.get(y0, x1) * fx;
            let bottom = src.get(y1, x0) * (1.0 - fx) + src.get(y1, x1) * fx;
            values.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Grid { height, width, values }
}
