//! Procedural lesion images.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Label, LesionParams};
use crate::netcore::Tensor;

const SKIN: [f64; 3] = [0.87, 0.69, 0.58];
const NAEVUS_BROWN: [f64; 3] = [0.55, 0.36, 0.26];
/// Mean close to `NAEVUS_BROWN`, so overall darkness carries no class signal.
const MELANOMA_PALETTE: [[f64; 3]; 4] = [
    [0.30, 0.19, 0.14],
    [0.48, 0.44, 0.56],
    [0.74, 0.42, 0.40],
    [0.66, 0.38, 0.22],
];
/// Radius at which the dark-corner vignette starts, as a fraction of the
/// half-diagonal.
pub const VIGNETTE_START: f64 = 0.7;

fn jitter(rng: &mut ChaCha8Rng, base: [f64; 3], amount: f64) -> [f64; 3] {
    base.map(|c| c + rng.gen_range(-amount..=amount))
}

/// Boundary radius multiplier `1 + amp · Σ w_k sin(kθ + φ_k)`.
struct Boundary {
    amplitude: f64,
    harmonics: Vec<(f64, f64, f64)>,
}

impl Boundary {
    fn new(rng: &mut ChaCha8Rng, amplitude: f64) -> Self {
        let raw: Vec<(f64, f64, f64)> = [3.0, 5.0, 7.0]
            .iter()
            .map(|&k| (k, rng.gen_range(0.2..1.0), rng.gen_range(0.0..2.0 * PI)))
            .collect();
        let total: f64 = raw.iter().map(|h| h.1).sum();
        Self {
            amplitude,
            harmonics: raw.into_iter().map(|(k, w, p)| (k, w / total, p)).collect(),
        }
    }

    fn radius(&self, theta: f64) -> f64 {
        1.0 + self.amplitude
            * self
                .harmonics
                .iter()
                .map(|&(k, w, p)| w * (k * theta + p).sin())
                .sum::<f64>()
    }
}

pub(crate) fn render_lesion(
    label: Label,
    params: &LesionParams,
    height: usize,
    width: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor {
    let brightness = rng.gen_range(-0.06..=0.06);
    let skin = jitter(rng, SKIN, 0.04).map(|c| c + brightness);
    let side = height.min(width) as f64;
    let cx = width as f64 / 2.0 + rng.gen_range(-0.08..=0.08) * width as f64;
    let cy = height as f64 / 2.0 + rng.gen_range(-0.08..=0.08) * height as f64;
    let radius = rng.gen_range(params.radius_min..=params.radius_max) * side;
    let aspect = rng.gen_range(0.75..=1.0);
    let (sin_o, cos_o) = rng.gen_range(0.0..PI).sin_cos();

    let amplitude = match label {
        Label::Naevus => 0.0,
        Label::Melanoma => rng.gen_range(params.melanoma_irregularity.0..=params.melanoma_irregularity.1),
    };
    let boundary = Boundary::new(rng, amplitude);

    // Tone patches: nearest of a few seed points inside the lesion.
    let base = jitter(rng, NAEVUS_BROWN, 0.05);
    let tones: Vec<([f64; 3], f64, f64)> = match label {
        Label::Naevus => vec![(base, 0.0, 0.0)],
        Label::Melanoma => {
            let count = rng.gen_range(2..=3);
            let mut palette = MELANOMA_PALETTE.to_vec();
            palette.shuffle(rng);
            palette
                .into_iter()
                .take(count)
                .map(|p| {
                    let colour = std::array::from_fn(|c| base[c] + params.tone_contrast * (p[c] - base[c]));
                    let (r, a) = (rng.gen_range(0.0..0.6), rng.gen_range(0.0..2.0 * PI));
                    (colour, r * a.cos(), r * a.sin())
                })
                .collect()
        }
    };

    let plane = height * width;
    let mut data = vec![0.0f32; 3 * plane];
    let noise = params.noise * 3f64.sqrt();
    for y in 0..height {
        for x in 0..width {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let u = (dx * cos_o + dy * sin_o) / radius;
            let v = (-dx * sin_o + dy * cos_o) / (radius * aspect);
            let dist = (u * u + v * v).sqrt();
            let edge = boundary.radius(v.atan2(u));
            let coverage = ((edge - dist) * radius + 0.5).clamp(0.0, 1.0);
            let lesion = if coverage > 0.0 {
                let tone = tones
                    .iter()
                    .min_by(|a, b| {
                        let da = (u - a.1).powi(2) + (v - a.2).powi(2);
                        let db = (u - b.1).powi(2) + (v - b.2).powi(2);
                        da.total_cmp(&db)
                    })
                    .unwrap();
                let shade = 1.0 - 0.15 * (1.0 - (dist / edge).min(1.0));
                tone.0.map(|c| c * shade)
            } else {
                [0.0; 3]
            };
            let i = y * width + x;
            for c in 0..3 {
                let value = skin[c] * (1.0 - coverage) + lesion[c] * coverage + rng.gen_range(-noise..=noise);
                data[c * plane + i] = value.clamp(0.0, 1.0) as f32;
            }
        }
    }
    Tensor::from_parts(vec![3, height, width], data)
}

/// Multiplies intensities by `1 − strength · max(0, r − r0) / (1 − r0)`,
/// `r` being the distance from the centre normalized by the half-diagonal.
pub fn apply_dark_corners(image: &mut Tensor, strength: f64) {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let half_diagonal = (cx * cx + cy * cy).sqrt();
    let plane = h * w;
    let data = image.data_mut();
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let r = (dx * dx + dy * dy).sqrt() / half_diagonal;
            let factor = (1.0 - strength * (r - VIGNETTE_START).max(0.0) / (1.0 - VIGNETTE_START)) as f32;
            if factor < 1.0 {
                for c in 0..3 {
                    data[c * plane + y * w + x] *= factor;
                }
            }
        }
    }
}
