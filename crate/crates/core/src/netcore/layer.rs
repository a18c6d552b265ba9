//! Layer primitives. Forward kernels are generic over the float type so the
//! finite-difference oracle can evaluate the same architecture in `f64`.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Relu,
    #[serde(rename = "maxpool2x2")]
    MaxPool2x2,
    GlobalAvgPool,
    Dense,
    Sigmoid,
}

/// Valid-padding, stride-1 cross-correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `C_out × C_in × k_h × k_w`
    pub weight: Tensor,
    /// `C_out`
    pub bias: Tensor,
}

impl Conv2d {
    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }
    pub fn kernel(&self) -> (usize, usize) {
        (self.weight.shape()[2], self.weight.shape()[3])
    }
}

/// Fully connected layer over the flattened input.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weight: Tensor,
    /// `out`
    pub bias: Tensor,
}

impl Dense {
    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }
    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    MaxPool2x2,
    GlobalAvgPool,
    Dense(Dense),
    Sigmoid,
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::Relu => LayerKind::Relu,
            Layer::MaxPool2x2 => LayerKind::MaxPool2x2,
            Layer::GlobalAvgPool => LayerKind::GlobalAvgPool,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Sigmoid => LayerKind::Sigmoid,
        }
    }

    pub fn has_parameters(&self) -> bool {
        matches!(self, Layer::Conv2d(_) | Layer::Dense(_))
    }

    /// `(weight, bias)` for parameterized layers.
    pub fn parameters(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Conv2d(c) => Some((&c.weight, &c.bias)),
            Layer::Dense(d) => Some((&d.weight, &d.bias)),
            _ => None,
        }
    }

    pub(crate) fn parameters_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Conv2d(c) => Some((&mut c.weight, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias)),
            _ => None,
        }
    }

    /// Output shape for `input`, or `None` if the layer cannot accept it.
    pub fn output_shape(&self, input: &[usize]) -> Option<Vec<usize>> {
        match self {
            Layer::Conv2d(conv) => {
                let [c, h, w] = *input else { return None };
                let (kh, kw) = conv.kernel();
                if c != conv.in_channels() || h < kh || w < kw || conv.bias.len() != conv.out_channels() {
                    return None;
                }
                Some(vec![conv.out_channels(), h - kh + 1, w - kw + 1])
            }
            Layer::Relu | Layer::Sigmoid => Some(input.to_vec()),
            Layer::MaxPool2x2 => {
                let [c, h, w] = *input else { return None };
                (h >= 2 && w >= 2).then(|| vec![c, h / 2, w / 2])
            }
            Layer::GlobalAvgPool => {
                let [c, _, _] = *input else { return None };
                Some(vec![c])
            }
            Layer::Dense(dense) => {
                let n: usize = input.iter().product();
                (n == dense.in_features() && dense.bias.len() == dense.out_features())
                    .then(|| vec![dense.out_features()])
            }
        }
    }

    pub(crate) fn forward<T: Float>(&self, input: &[T], shape: &[usize]) -> Vec<T> {
        match self {
            Layer::Conv2d(conv) => {
                let (kh, kw) = conv.kernel();
                conv2d_forward(
                    input,
                    (shape[0], shape[1], shape[2]),
                    conv.weight.data(),
                    conv.bias.data(),
                    conv.out_channels(),
                    (kh, kw),
                )
            }
            Layer::Relu => input
                .iter()
                .map(|&v| if v > T::zero() { v } else { T::zero() })
                .collect(),
            Layer::MaxPool2x2 => maxpool_forward(input, (shape[0], shape[1], shape[2])),
            Layer::GlobalAvgPool => gap_forward(input, (shape[0], shape[1], shape[2])),
            Layer::Dense(dense) => dense_forward(input, dense.weight.data(), dense.bias.data(), dense.out_features()),
            Layer::Sigmoid => input.iter().map(|&v| sigmoid(v)).collect(),
        }
    }
}

pub(crate) fn sigmoid<T: Float>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn cast<T: Float>(v: f32) -> T {
    T::from(v).expect("f32 converts to any float")
}

pub(crate) fn conv2d_forward<T: Float>(
    input: &[T],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    bias: &[f32],
    c_out: usize,
    (kh, kw): (usize, usize),
) -> Vec<T> {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let plane = oh * ow;
    let mut out = vec![T::zero(); c_out * plane];
    for co in 0..c_out {
        let out_c = &mut out[co * plane..(co + 1) * plane];
        out_c.fill(cast(bias[co]));
        for ci in 0..c_in {
            let in_c = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv: T = cast(weight[((co * c_in + ci) * kh + ky) * kw + kx]);
                    for oy in 0..oh {
                        let src = &in_c[(oy + ky) * w + kx..(oy + ky) * w + kx + ow];
                        let dst = &mut out_c[oy * ow..(oy + 1) * ow];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d = *d + wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates into `grad_in`, `grad_w`, `grad_b` (each optional).
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    input: &[f32],
    (c_in, h, w): (usize, usize, usize),
    weight: &[f32],
    c_out: usize,
    (kh, kw): (usize, usize),
    grad_out: &[f64],
    mut grad_in: Option<&mut [f64]>,
    mut grad_params: Option<(&mut [f32], &mut [f32])>,
) {
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let plane = oh * ow;
    for co in 0..c_out {
        let g_c = &grad_out[co * plane..(co + 1) * plane];
        if let Some((_, gb)) = grad_params.as_mut() {
            gb[co] += g_c.iter().sum::<f64>() as f32;
        }
        for ci in 0..c_in {
            let in_off = ci * h * w;
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((co * c_in + ci) * kh + ky) * kw + kx;
                    let wv = weight[widx] as f64;
                    let mut acc = 0.0f64;
                    for oy in 0..oh {
                        let g = &g_c[oy * ow..(oy + 1) * ow];
                        let start = in_off + (oy + ky) * w + kx;
                        if grad_params.is_some() {
                            let src = &input[start..start + ow];
                            acc += src.iter().zip(g).map(|(&a, &b)| a as f64 * b).sum::<f64>();
                        }
                        if let Some(gi) = grad_in.as_mut() {
                            let dst = &mut gi[start..start + ow];
                            for (d, &gv) in dst.iter_mut().zip(g) {
                                *d += wv * gv;
                            }
                        }
                    }
                    if let Some((gw, _)) = grad_params.as_mut() {
                        gw[widx] += acc as f32;
                    }
                }
            }
        }
    }
}

/// Index (into the input plane) of the first maximum in each 2×2 window.
fn pool_argmax<T: Float>(input: &[T], h: usize, w: usize, y: usize, x: usize) -> usize {
    let candidates = [
        (2 * y) * w + 2 * x,
        (2 * y) * w + 2 * x + 1,
        (2 * y + 1) * w + 2 * x,
        (2 * y + 1) * w + 2 * x + 1,
    ];
    debug_assert!(2 * y + 1 < h);
    let mut best = candidates[0];
    for &i in &candidates[1..] {
        if input[i] > input[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn maxpool_forward<T: Float>(input: &[T], (c, h, w): (usize, usize, usize)) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                out.push(plane[pool_argmax(plane, h, w, y, x)]);
            }
        }
    }
    out
}

pub(crate) fn maxpool_backward(input: &[f32], (c, h, w): (usize, usize, usize), grad_out: &[f64], grad_in: &mut [f64]) {
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for y in 0..oh {
            for x in 0..ow {
                let i = pool_argmax(plane, h, w, y, x);
                grad_in[ch * h * w + i] += grad_out[(ch * oh + y) * ow + x];
            }
        }
    }
}

pub(crate) fn gap_forward<T: Float>(input: &[T], (c, h, w): (usize, usize, usize)) -> Vec<T> {
    let z = T::from(h * w).unwrap();
    (0..c)
        .map(|ch| {
            let sum = input[ch * h * w..(ch + 1) * h * w]
                .iter()
                .fold(T::zero(), |acc, &v| acc + v);
            sum / z
        })
        .collect()
}

pub(crate) fn dense_forward<T: Float>(input: &[T], weight: &[f32], bias: &[f32], out: usize) -> Vec<T> {
    let n = input.len();
    (0..out)
        .map(|o| {
            weight[o * n..(o + 1) * n]
                .iter()
                .zip(input)
                .fold(cast::<T>(bias[o]), |acc, (&wv, &x)| acc + cast::<T>(wv) * x)
        })
        .collect()
}
