use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::gemm::gemm;
use super::Tensor;
use crate::error::{Error, Result};
use crate::math;

/// Weights and biases of one layer with gradient accumulators of the same
/// shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub biases: Tensor,
    pub weight_grad: Tensor,
    pub bias_grad: Tensor,
}

impl LayerParams {
    pub fn zeros(weight_shape: &[usize], bias_len: usize) -> Self {
        Self {
            weights: Tensor::zeros(weight_shape),
            biases: Tensor::zeros(&[bias_len]),
            weight_grad: Tensor::zeros(weight_shape),
            bias_grad: Tensor::zeros(&[bias_len]),
        }
    }

    /// Uniform He initialization: weights in `[-sqrt(6/fan_in), sqrt(6/fan_in)]`,
    /// zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(
        weight_shape: &[usize],
        bias_len: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(weight_shape, bias_len);
        let limit = math::sqrt(6.0 / fan_in.max(1) as f64);
        for w in p.weights.data_mut() {
            *w = rng.random_range(-limit..=limit);
        }
        p
    }

    pub fn zero_grad(&mut self) {
        self.weight_grad.fill(0.0);
        self.bias_grad.fill(0.0);
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Same-padded, stride-1 cross-correlation with a square odd kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub params: LayerParams,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd");
        let params = LayerParams::he_uniform(
            &[out_channels, in_channels, kernel, kernel],
            out_channels,
            in_channels * kernel * kernel,
            rng,
        );
        Self { params, in_channels, out_channels, kernel }
    }

    pub fn from_params(params: LayerParams) -> Result<Self> {
        let s = params.weights.shape();
        if s.len() != 4 || s[2] != s[3] || s[2] % 2 == 0 || params.biases.len() != s[0] {
            return Err(Error::ShapeError(format!("invalid conv weight shape {s:?}")));
        }
        let (out_channels, in_channels, kernel) = (s[0], s[1], s[2]);
        Ok(Self { params, in_channels, out_channels, kernel })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    fn input_dims(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        x.expect_rank(4, "conv2d")?;
        let s = x.shape();
        if s[1] != self.in_channels {
            return Err(Error::ShapeError(format!(
                "conv2d expects {} input channels, got {}",
                self.in_channels, s[1]
            )));
        }
        Ok((s[0], s[2], s[3]))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (batch, h, w) = self.input_dims(x)?;
        let (c, o, k) = (self.in_channels, self.out_channels, self.kernel);
        let hw = h * w;
        let mut out = Tensor::zeros(&[batch, o, h, w]);
        let mut col = vec![0.0; c * k * k * hw];
        let bias = self.params.biases.data();
        for s in 0..batch {
            im2col(&x.data()[s * c * hw..(s + 1) * c * hw], c, h, w, k, &mut col);
            let y = &mut out.data_mut()[s * o * hw..(s + 1) * o * hw];
            for (oc, plane) in y.chunks_exact_mut(hw).enumerate() {
                plane.fill(bias[oc]);
            }
            gemm(o, c * k * k, hw, self.params.weights.data(), false, &col, false, 1.0, y);
        }
        Ok(out)
    }

    /// Accumulates weight and bias gradients; returns the input gradient when
    /// `input_grad` is set.
    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor, input_grad: bool) -> Result<Option<Tensor>> {
        let (batch, h, w) = self.input_dims(x)?;
        let (c, o, k) = (self.in_channels, self.out_channels, self.kernel);
        if grad_out.shape() != [batch, o, h, w] {
            return Err(Error::ShapeError(format!(
                "conv2d gradient shape {:?} does not match output [{batch}, {o}, {h}, {w}]",
                grad_out.shape()
            )));
        }
        let hw = h * w;
        let ckk = c * k * k;
        let mut col = vec![0.0; ckk * hw];
        let mut dcol = if input_grad { vec![0.0; ckk * hw] } else { Vec::new() };
        let mut dx = input_grad.then(|| Tensor::zeros(x.shape()));
        for s in 0..batch {
            im2col(&x.data()[s * c * hw..(s + 1) * c * hw], c, h, w, k, &mut col);
            let g = &grad_out.data()[s * o * hw..(s + 1) * o * hw];
            gemm(o, hw, ckk, g, false, &col, true, 1.0, self.params.weight_grad.data_mut());
            for (oc, plane) in g.chunks_exact(hw).enumerate() {
                self.params.bias_grad.data_mut()[oc] += plane.iter().sum::<f64>();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(ckk, o, hw, self.params.weights.data(), true, g, false, 0.0, &mut dcol);
                col2im(&dcol, c, h, w, k, &mut dx.data_mut()[s * c * hw..(s + 1) * c * hw]);
            }
        }
        Ok(dx)
    }
}

/// Valid x range `[lo, hi)` for a horizontal kernel offset `dx`.
fn shifted_range(w: usize, dx: isize) -> (usize, usize) {
    let lo = (-dx).clamp(0, w as isize) as usize;
    let hi = (w as isize - dx).clamp(0, w as isize) as usize;
    (lo, hi.max(lo))
}

/// Rows indexed by (channel, ky, kx), columns by output pixel.
fn im2col(src: &[f64], c: usize, h: usize, w: usize, k: usize, col: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let (lo, hi) = shifted_range(w, dx);
                for y in 0..h {
                    let out = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let srow = &src[ci * hw + sy as usize * w..][..w];
                    out[..lo].fill(0.0);
                    out[hi..].fill(0.0);
                    let (slo, shi) = ((lo as isize + dx) as usize, (hi as isize + dx) as usize);
                    if lo < hi {
                        out[lo..hi].copy_from_slice(&srow[slo..shi]);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the input.
fn col2im(col: &[f64], c: usize, h: usize, w: usize, k: usize, dst: &mut [f64]) {
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ci * k + ky) * k + kx) * hw..][..hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                let (lo, hi) = shifted_range(w, dx);
                if lo >= hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let drow = &mut dst[ci * hw + sy as usize * w..][..w];
                    let src = &row[y * w + lo..y * w + hi];
                    let target = &mut drow[(lo as isize + dx) as usize..(hi as isize + dx) as usize];
                    for (d, s) in target.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Fully connected layer `y = x W^T + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub params: LayerParams,
    in_features: usize,
    out_features: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let params = LayerParams::he_uniform(&[out_features, in_features], out_features, in_features, rng);
        Self { params, in_features, out_features }
    }

    pub fn zeroed(in_features: usize, out_features: usize) -> Self {
        Self { params: LayerParams::zeros(&[out_features, in_features], out_features), in_features, out_features }
    }

    pub fn from_params(params: LayerParams) -> Result<Self> {
        let s = params.weights.shape();
        if s.len() != 2 || params.biases.len() != s[0] {
            return Err(Error::ShapeError(format!("invalid linear weight shape {s:?}")));
        }
        let (out_features, in_features) = (s[0], s[1]);
        Ok(Self { params, in_features, out_features })
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    fn batch_of(&self, x: &Tensor) -> Result<usize> {
        x.expect_rank(2, "linear")?;
        if x.shape()[1] != self.in_features {
            return Err(Error::ShapeError(format!(
                "linear expects {} features, got {}",
                self.in_features,
                x.shape()[1]
            )));
        }
        Ok(x.shape()[0])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let batch = self.batch_of(x)?;
        let mut y = Tensor::zeros(&[batch, self.out_features]);
        if self.out_features > 0 {
            for row in y.data_mut().chunks_exact_mut(self.out_features) {
                row.copy_from_slice(self.params.biases.data());
            }
        }
        gemm(
            batch,
            self.in_features,
            self.out_features,
            x.data(),
            false,
            self.params.weights.data(),
            true,
            1.0,
            y.data_mut(),
        );
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor, grad_out: &Tensor, input_grad: bool) -> Result<Option<Tensor>> {
        let batch = self.batch_of(x)?;
        if grad_out.shape() != [batch, self.out_features] {
            return Err(Error::ShapeError(format!(
                "linear gradient shape {:?} does not match output [{batch}, {}]",
                grad_out.shape(),
                self.out_features
            )));
        }
        let (n_in, n_out) = (self.in_features, self.out_features);
        gemm(n_out, batch, n_in, grad_out.data(), true, x.data(), false, 1.0, self.params.weight_grad.data_mut());
        if n_out > 0 {
            for row in grad_out.data().chunks_exact(n_out) {
                math::axpy(1.0, row, self.params.bias_grad.data_mut());
            }
        }
        if !input_grad {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(x.shape());
        gemm(batch, n_out, n_in, grad_out.data(), false, self.params.weights.data(), false, 0.0, dx.data_mut());
        Ok(Some(dx))
    }
}

pub fn relu(x: &mut Tensor) {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `grad` in place using the ReLU output.
pub fn relu_backward(output: &Tensor, grad: &mut Tensor) {
    for (g, &y) in grad.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Flat input index of each pooled maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolIndices {
    input_shape: [usize; 4],
    argmax: Vec<usize>,
}

/// 2x2 max pooling with stride 2; ties go to the first maximum in scan order.
pub fn maxpool2x2(x: &Tensor) -> Result<(Tensor, PoolIndices)> {
    x.expect_rank(4, "maxpool2x2")?;
    let s = x.shape();
    let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeError(format!("maxpool2x2 needs even spatial dims, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[b, c, oh, ow]);
    let mut argmax = vec![0usize; b * c * oh * ow];
    let data = x.data();
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for cand in [top + 1, top + w, top + w + 1] {
                    if data[cand] > data[best] {
                        best = cand;
                    }
                }
                let o = plane * oh * ow + oy * ow + ox;
                out.data_mut()[o] = data[best];
                argmax[o] = best;
            }
        }
    }
    Ok((out, PoolIndices { input_shape: [b, c, h, w], argmax }))
}

pub fn maxpool2x2_backward(grad_out: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    if grad_out.len() != indices.argmax.len() {
        return Err(Error::ShapeError(format!(
            "maxpool gradient has {} values, expected {}",
            grad_out.len(),
            indices.argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(&indices.input_shape);
    for (&g, &i) in grad_out.data().iter().zip(&indices.argmax) {
        dx.data_mut()[i] += g;
    }
    Ok(dx)
}

/// Inverted dropout: survivors are scaled by `1/(1-p)` during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::ConfigError(format!("dropout rate must lie in [0, 1), got {p}")));
        }
        Ok(Self { p })
    }

    pub fn rate(&self) -> f64 {
        self.p
    }

    /// Applies dropout in place and returns the per-element scale, or `None`
    /// in inference mode (identity).
    pub fn forward<R: Rng + ?Sized>(&self, x: &mut Tensor, train: bool, rng: &mut R) -> Option<Vec<f64>> {
        if !train || self.p == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> =
            (0..x.len()).map(|_| if rng.random::<f64>() < self.p { 0.0 } else { keep }).collect();
        for (v, m) in x.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        Some(mask)
    }

    pub fn backward(mask: Option<&[f64]>, grad: &mut Tensor) {
        if let Some(mask) = mask {
            for (g, m) in grad.data_mut().iter_mut().zip(mask) {
                *g *= m;
            }
        }
    }
}

fn class_count(logits: &Tensor) -> Result<(usize, usize)> {
    logits.expect_rank(2, "softmax")?;
    let (b, k) = (logits.shape()[0], logits.shape()[1]);
    if k == 0 {
        return Err(Error::ShapeError("softmax over zero classes".into()));
    }
    Ok((b, k))
}

/// Row-wise softmax of `(batch, k)` logits.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (_, k) = class_count(logits)?;
    let mut p = logits.clone();
    for row in p.data_mut().chunks_exact_mut(k) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = math::exp(*v - max);
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(p)
}

/// Mean cross-entropy of the softmax over the batch and its gradient with
/// respect to the logits, `(softmax - onehot) / batch`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, k) = class_count(logits)?;
    if labels.len() != b {
        return Err(Error::DimensionError { expected: b, got: labels.len() });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::IndexError { index: bad, len: k });
    }
    let mut grad = softmax(logits)?;
    let mut loss = 0.0;
    for ((row, logit_row), &label) in grad.data_mut().chunks_exact_mut(k).zip(logits.data().chunks_exact(k)).zip(labels) {
        let max = logit_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + math::ln(logit_row.iter().map(|&z| math::exp(z - max)).sum::<f64>());
        loss += lse - logit_row[label];
        row[label] -= 1.0;
    }
    let scale = 1.0 / b.max(1) as f64;
    grad.data_mut().iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}
