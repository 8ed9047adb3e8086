//! Dense shaped f32 arrays plus the small amount of linear algebra the
//! rest of the crate needs.
//!
//! Values are stored row-major in 32-bit floats. Reductions (matmul, conv,
//! covariance) accumulate in 64-bit with a fixed sequential order, so results
//! are bit-identical across runs; outputs are rounded back to f32 at the
//! boundary. Covariance/Cholesky/eigen live in [`linalg`].

mod linalg;

pub use linalg::{cholesky_spd, covariance, solve_spd, top_eigenvectors, top_eigenvectors_f64, SpdFactor};

use crate::error::{Error, Result};

/// A shaped, row-major array of finite f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Build a tensor, validating length and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(Error::shape(
                "tensor construction",
                format!("{expect} elements for shape {shape:?}"),
                format!("{}", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite tensor element {bad}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reinterpret with a new shape of identical element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("{} elements", self.data.len()),
                format!("shape {shape:?} = {expect}"),
            ));
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Row-major element of a rank-2 tensor.
    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f32 {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// Row-major element of a rank-3 tensor.
    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f32 {
        debug_assert_eq!(self.shape.len(), 3);
        self.data[(c * self.shape[1] + y) * self.shape[2] + x]
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f32] {
        debug_assert_eq!(self.shape.len(), 2);
        let w = self.shape[1];
        &self.data[i * w..(i + 1) * w]
    }

    /// Index of the largest element; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0usize;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

/// Standard matrix product of an `m×k` and a `k×n` tensor.
///
/// Accumulates each output element in f64 over a fixed index order.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().len() != 2 || b.shape().len() != 2 {
        return Err(Error::shape("matmul", "two rank-2 tensors", format!("{:?} x {:?}", a.shape(), b.shape())));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(Error::shape("matmul inner dims", format!("{k}"), format!("{k2}")));
    }
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for p in 0..k {
                acc += a.data[i * k + p] as f64 * b.data[p * n + j] as f64;
            }
            out[i * n + j] = acc as f32;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// 2-D cross-correlation of a `C×H×W` input with an `F×C×kh×kw` kernel,
/// zero padding, no kernel flip.
///
/// Output is `F×H'×W'` with `H' = (H + 2p − kh)/stride + 1` (floor).
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    if input.shape().len() != 3 {
        return Err(Error::shape("conv2d input", "C×H×W", format!("{:?}", input.shape())));
    }
    if kernel.shape().len() != 4 {
        return Err(Error::shape("conv2d kernel", "F×C×kh×kw", format!("{:?}", kernel.shape())));
    }
    if stride == 0 {
        return Err(Error::domain("stride", 0.0, "positive integer"));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (f, kc, kh, kw) = (
        kernel.shape()[0],
        kernel.shape()[1],
        kernel.shape()[2],
        kernel.shape()[3],
    );
    if kc != c {
        return Err(Error::shape("conv2d channels", format!("{c}"), format!("{kc}")));
    }
    if kh > h + 2 * padding || kw > w + 2 * padding {
        return Err(Error::shape(
            "conv2d kernel extent",
            format!("≤ padded input {}×{}", h + 2 * padding, w + 2 * padding),
            format!("{kh}×{kw}"),
        ));
    }
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let mut out = vec![0.0f32; f * oh * ow];
    for of in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f64;
                for ic in 0..c {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let iv = input.data[(ic * h + iy as usize) * w + ix as usize];
                            let kv = kernel.data[((of * c + ic) * kh + ky) * kw + kx];
                            acc += iv as f64 * kv as f64;
                        }
                    }
                }
                out[(of * oh + oy) * ow + ox] = acc as f32;
            }
        }
    }
    Tensor::new(vec![f, oh, ow], out)
}

/// Channel-wise max pooling with square window `k` and the given stride.
pub fn maxpool2d(input: &Tensor, k: usize, stride: usize) -> Result<Tensor> {
    if input.shape().len() != 3 {
        return Err(Error::shape("maxpool2d input", "C×H×W", format!("{:?}", input.shape())));
    }
    if stride == 0 {
        return Err(Error::domain("stride", 0.0, "positive integer"));
    }
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    if k == 0 || k > h || k > w {
        return Err(Error::domain("k", k as f64, format!("1..=min(H,W) = {}", h.min(w))));
    }
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let mut out = vec![0.0f32; c * oh * ow];
    for ic in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                for ky in 0..k {
                    for kx in 0..k {
                        let v = input.data[(ic * h + oy * stride + ky) * w + ox * stride + kx];
                        if v > best {
                            best = v;
                        }
                    }
                }
                out[(ic * oh + oy) * ow + ox] = best;
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

/// `scale · ln Σ exp(vᵢ/scale)`, stabilized by max subtraction.
pub fn logsumexp(v: &Tensor, scale: f64) -> Result<f64> {
    logsumexp_slice(v.data(), scale)
}

pub(crate) fn logsumexp_slice(v: &[f32], scale: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput("logsumexp of empty vector".into()));
    }
    if scale <= 0.0 || scale.is_nan() {
        return Err(Error::domain("scale", scale, "> 0"));
    }
    let m = v.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut sum = 0.0f64;
    for &x in v {
        sum += ((x as f64 - m) / scale).exp();
    }
    Ok(m + scale * sum.ln())
}

/// Softmax of `logits/t` computed in f64 with max subtraction.
pub(crate) fn softmax_f64(logits: &[f32], t: f64) -> Vec<f64> {
    let m = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut e: Vec<f64> = logits.iter().map(|&x| ((x as f64 - m) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    for v in &mut e {
        *v /= s;
    }
    e
}
