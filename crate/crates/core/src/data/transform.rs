//! Generated-OOD transforms: perturbations, noise, and FGSM adversarials.
//!
//! Every transform preserves dataset size and labels, keeps pixels in
//! `[0,1]`, and is a pure function of `(input, seed)`.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{forward, grad_input, InputLoss, Network};

/// Deterministic image perturbations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbVariant {
    /// `x + amount`, amount in [−1, 1].
    Light,
    /// `0.5 + amount·(x − 0.5)`, amount > 0; above 1 increases contrast.
    Contrast,
    /// Separable Gaussian blur with σ = amount, radius ⌈3σ⌉, reflect padding.
    GaussianBlur,
    /// `1 − x`; amount is ignored.
    Invert,
    /// Rotation by `amount` degrees about the image center, bilinear
    /// interpolation, out-of-frame fill 0.
    Rotate,
}

/// Random pixel corruptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseVariant {
    /// `clamp(x + N(0, amount²))`.
    Gaussian,
    /// Each pixel independently replaced with probability `amount`,
    /// by 0 or 1 with equal probability.
    SaltAndPepper,
}

pub fn perturb(ds: &LabeledDataset, variant: PerturbVariant, amount: f64, _seed: u64) -> Result<LabeledDataset> {
    let name = format!("{}/{variant:?}", ds.name);
    match variant {
        PerturbVariant::Light => {
            if !(-1.0..=1.0).contains(&amount) {
                return Err(Error::domain("amount", amount, "[-1, 1]"));
            }
            map_pixels(ds, name, |x| (x as f64 + amount).clamp(0.0, 1.0) as f32)
        }
        PerturbVariant::Contrast => {
            if amount <= 0.0 || amount.is_nan() {
                return Err(Error::domain("amount", amount, "> 0"));
            }
            map_pixels(ds, name, |x| (0.5 + amount * (x as f64 - 0.5)).clamp(0.0, 1.0) as f32)
        }
        PerturbVariant::GaussianBlur => {
            if amount < 0.0 || !amount.is_finite() {
                return Err(Error::domain("amount", amount, "finite, ≥ 0"));
            }
            gaussian_blur(ds, amount, name)
        }
        PerturbVariant::Invert => map_pixels(ds, name, |x| 1.0 - x),
        PerturbVariant::Rotate => {
            if !amount.is_finite() {
                return Err(Error::domain("amount", amount, "finite degrees"));
            }
            rotate(ds, amount, name)
        }
    }
}

fn map_pixels(ds: &LabeledDataset, name: String, f: impl Fn(f32) -> f32) -> Result<LabeledDataset> {
    let pixels = ds.images().data().iter().map(|&x| f(x)).collect();
    ds.with_pixels(pixels, name)
}

/// Normalized 1-D Gaussian taps for σ; radius ⌈3σ⌉.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

// Reflect indexing: -1 → 0, -2 → 1, n → n-1 (edge-inclusive mirror).
fn reflect(i: i64, n: i64) -> usize {
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn gaussian_blur(ds: &LabeledDataset, sigma: f64, name: String) -> Result<LabeledDataset> {
    let shape = ds.image_shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let per = c * h * w;
    let mut out = Vec::with_capacity(ds.images().len());
    let mut tmp = vec![0.0f64; per];
    for i in 0..ds.len() {
        let px = ds.pixels(i);
        // Horizontal pass into tmp, vertical pass into out.
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f64;
                    for (t, kv) in kernel.iter().enumerate() {
                        let sx = reflect(x as i64 + t as i64 - radius, w as i64);
                        acc += kv * px[(ch * h + y) * w + sx] as f64;
                    }
                    tmp[(ch * h + y) * w + x] = acc;
                }
            }
        }
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0f64;
                    for (t, kv) in kernel.iter().enumerate() {
                        let sy = reflect(y as i64 + t as i64 - radius, h as i64);
                        acc += kv * tmp[(ch * h + sy) * w + x];
                    }
                    out.push(acc.clamp(0.0, 1.0) as f32);
                }
            }
        }
    }
    ds.with_pixels(out, name)
}

fn rotate(ds: &LabeledDataset, degrees: f64, name: String) -> Result<LabeledDataset> {
    let shape = ds.image_shape();
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let theta = degrees.to_radians();
    let (sin, cos) = (theta.sin(), theta.cos());
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(ds.images().len());
    for i in 0..ds.len() {
        let px = ds.pixels(i);
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let dy = y as f64 - cy;
                    let dx = x as f64 - cx;
                    // Inverse map: sample the source that lands here.
                    let sy = cy + cos * dy + sin * dx;
                    let sx = cx - sin * dy + cos * dx;
                    let y0 = sy.floor();
                    let x0 = sx.floor();
                    let fy = sy - y0;
                    let fx = sx - x0;
                    let sample = |yy: f64, xx: f64| -> f64 {
                        if yy < 0.0 || xx < 0.0 || yy > (h - 1) as f64 || xx > (w - 1) as f64 {
                            0.0
                        } else {
                            px[(ch * h + yy as usize) * w + xx as usize] as f64
                        }
                    };
                    let v = (1.0 - fy) * (1.0 - fx) * sample(y0, x0)
                        + (1.0 - fy) * fx * sample(y0, x0 + 1.0)
                        + fy * (1.0 - fx) * sample(y0 + 1.0, x0)
                        + fy * fx * sample(y0 + 1.0, x0 + 1.0);
                    out.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
    }
    ds.with_pixels(out, name)
}

pub fn add_noise(ds: &LabeledDataset, variant: NoiseVariant, amount: f64, seed: u64) -> Result<LabeledDataset> {
    let name = format!("{}/{variant:?}", ds.name);
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    match variant {
        NoiseVariant::Gaussian => {
            if amount < 0.0 || !amount.is_finite() {
                return Err(Error::domain("amount", amount, "finite, ≥ 0"));
            }
            if amount == 0.0 {
                return map_pixels(ds, name, |x| x);
            }
            let dist = Normal::new(0.0f64, amount).expect("valid std");
            let pixels = ds
                .images()
                .data()
                .iter()
                .map(|&x| (x as f64 + dist.sample(&mut rng)).clamp(0.0, 1.0) as f32)
                .collect();
            ds.with_pixels(pixels, name)
        }
        NoiseVariant::SaltAndPepper => {
            if !(0.0..=1.0).contains(&amount) {
                return Err(Error::domain("amount", amount, "[0, 1]"));
            }
            let pixels = ds
                .images()
                .data()
                .iter()
                .map(|&x| {
                    if rng.gen_range(0.0f64..1.0) < amount {
                        if rng.gen_range(0.0f64..1.0) < 0.5 {
                            0.0
                        } else {
                            1.0
                        }
                    } else {
                        x
                    }
                })
                .collect();
            ds.with_pixels(pixels, name)
        }
    }
}

/// One-step fast gradient sign attack against `net`'s own prediction:
/// `x′ = clamp(x + ε·sign(∂CE(predicted)/∂x))`, labels preserved.
/// The ∞-norm bound `‖x′−x‖∞ ≤ ε` holds exactly.
pub fn fgsm(ds: &LabeledDataset, net: &Network, epsilon: f64) -> Result<LabeledDataset> {
    if epsilon < 0.0 || !epsilon.is_finite() {
        return Err(Error::domain("epsilon", epsilon, "finite, ≥ 0"));
    }
    let per: usize = ds.image_shape().iter().product();
    let mut pixels = Vec::with_capacity(ds.images().len());
    for i in 0..ds.len() {
        let x = ds.image(i)?;
        let trace = forward(net, &x)?;
        let g = grad_input(net, &x, InputLoss::CrossEntropy { target: trace.predicted_class })?;
        for (j, (&xv, &gv)) in x.data().iter().zip(g.data()).enumerate() {
            let _ = j;
            let step = if gv > 0.0 {
                epsilon
            } else if gv < 0.0 {
                -epsilon
            } else {
                0.0
            };
            let mut y = ((xv as f64 + step).clamp(0.0, 1.0)) as f32;
            // f32 rounding can land half an ulp past the ε ball; nudge back.
            while (y as f64 - xv as f64).abs() > epsilon {
                y = next_toward(y, xv);
            }
            pixels.push(y);
        }
    }
    let _ = per;
    ds.with_pixels(pixels, format!("{}/FGSM", ds.name))
}

fn next_toward(v: f32, target: f32) -> f32 {
    if v == target {
        return v;
    }
    let bits = v.to_bits() as i32;
    let next = if (v > target) == (v > 0.0 || (v == 0.0 && target < 0.0)) {
        bits - 1
    } else {
        bits + 1
    };
    f32::from_bits(next as u32)
}
