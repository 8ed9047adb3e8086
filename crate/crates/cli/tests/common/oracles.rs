//! Brute-force oracles used by the acceptance suite; deliberately
//! independent re-implementations of what they check.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

use oodmon_core::nn::{LayerSpec, Network};

pub fn naive_matmul(a: &[f32], m: usize, k: usize, b: &[f32], n: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a[i * k + p] as f64 * b[p * n + j] as f64;
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    input: &[f32],
    c: usize,
    h: usize,
    w: usize,
    kernel: &[f32],
    f: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Vec<f64> {
    let oh = (h + 2 * padding - kh) / stride + 1;
    let ow = (w + 2 * padding - kw) / stride + 1;
    let mut out = vec![0.0f64; f * oh * ow];
    for of in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                for ic in 0..c {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            out[(of * oh + oy) * ow + ox] += input[(ic * h + iy as usize) * w + ix as usize] as f64
                                * kernel[((of * c + ic) * kh + ky) * kw + kx] as f64;
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn naive_maxpool(input: &[f32], c: usize, h: usize, w: usize, k: usize, stride: usize) -> Vec<f64> {
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let mut out = vec![f64::NEG_INFINITY; c * oh * ow];
    for ic in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..k {
                    for kx in 0..k {
                        let v = input[(ic * h + oy * stride + ky) * w + ox * stride + kx] as f64;
                        let slot = &mut out[(ic * oh + oy) * ow + ox];
                        if v > *slot {
                            *slot = v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Layer-by-layer forward pass in f64.
pub fn oracle_forward(net: &Network, x: &[f32]) -> Vec<f64> {
    let mut data: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let mut shape: Vec<usize> = net.input_shape.clone();
    for layer in &net.layers {
        match layer {
            LayerSpec::Dense { w, b } => {
                let (o, i) = (w.shape()[0], w.shape()[1]);
                let mut out = vec![0.0f64; o];
                for r in 0..o {
                    let mut acc = b.data()[r] as f64;
                    for cidx in 0..i {
                        acc += w.data()[r * i + cidx] as f64 * data[cidx];
                    }
                    out[r] = acc;
                }
                data = out;
                shape = vec![o];
            }
            LayerSpec::Conv2d { w, b, stride, padding } => {
                let (c, h, wd) = (shape[0], shape[1], shape[2]);
                let (f, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
                let oh = (h + 2 * padding - kh) / stride + 1;
                let ow = (wd + 2 * padding - kw) / stride + 1;
                let mut out = vec![0.0f64; f * oh * ow];
                for of in 0..f {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc = b.data()[of] as f64;
                            for ic in 0..c {
                                for ky in 0..kh {
                                    for kx in 0..kw {
                                        let iy = (oy * stride + ky) as isize - *padding as isize;
                                        let ix = (ox * stride + kx) as isize - *padding as isize;
                                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                            continue;
                                        }
                                        acc += data[(ic * h + iy as usize) * wd + ix as usize]
                                            * w.data()[((of * c + ic) * kh + ky) * kw + kx] as f64;
                                    }
                                }
                            }
                            out[(of * oh + oy) * ow + ox] = acc;
                        }
                    }
                }
                data = out;
                shape = vec![f, oh, ow];
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                let (c, h, wd) = (shape[0], shape[1], shape[2]);
                let oh = (h - kernel) / stride + 1;
                let ow = (wd - kernel) / stride + 1;
                let mut out = vec![f64::NEG_INFINITY; c * oh * ow];
                for ic in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    let v = data[(ic * h + oy * stride + ky) * wd + ox * stride + kx];
                                    let slot = &mut out[(ic * oh + oy) * ow + ox];
                                    if v > *slot {
                                        *slot = v;
                                    }
                                }
                            }
                        }
                    }
                }
                data = out;
                shape = vec![c, oh, ow];
            }
            LayerSpec::BatchNorm { gamma, beta, mean, var } => {
                let dim = gamma.len();
                let per = data.len() / dim;
                for ch in 0..dim {
                    let scale = gamma.data()[ch] as f64 / ((var.data()[ch] as f64) + 1e-5).sqrt();
                    for i in 0..per {
                        let v = &mut data[ch * per + i];
                        *v = scale * (*v - mean.data()[ch] as f64) + beta.data()[ch] as f64;
                    }
                }
            }
            LayerSpec::Relu => {
                for v in &mut data {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            LayerSpec::Elu { alpha } => {
                for v in &mut data {
                    if *v <= 0.0 {
                        *v = *alpha as f64 * (v.exp() - 1.0);
                    }
                }
            }
            LayerSpec::Flatten => {
                shape = vec![data.len()];
            }
        }
    }
    data
}

fn softmax64(logits: &[f64], t: f64) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&v| ((v - m) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn loss_cross_entropy(logits: &[f64], target: usize) -> f64 {
    -softmax64(logits, 1.0)[target].ln()
}

pub fn loss_kl_uniform(logits: &[f64], t: f64) -> f64 {
    let p = softmax64(logits, t);
    let c = logits.len() as f64;
    p.iter().map(|&pi| (1.0 / c) * ((1.0 / c) / pi).ln()).sum()
}

pub fn fd_grad_input(net: &Network, x: &[f32], h: f64, loss: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = vec![0.0f64; x.len()];
    let mut xp: Vec<f32> = x.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        xp[i] = (orig as f64 + h) as f32;
        let up = loss(&oracle_forward(net, &xp));
        xp[i] = (orig as f64 - h) as f32;
        let dn = loss(&oracle_forward(net, &xp));
        xp[i] = orig;
        grad[i] = (up - dn) / (2.0 * h);
    }
    grad
}

pub fn pairwise_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut total = 0.0f64;
    for &a in id {
        for &b in ood {
            total += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (id.len() as f64 * ood.len() as f64)
}

pub fn brute_force_threshold(scores: &[f64], target: f64) -> f64 {
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    candidates.push(f64::NEG_INFINITY);
    let n = scores.len() as f64;
    for tau in candidates {
        if scores.iter().filter(|&&s| s >= tau).count() as f64 / n >= target {
            return tau;
        }
    }
    unreachable!()
}
