//! Reverse-mode gradients through every layer kind.
//!
//! One backward engine serves three callers: `grad_input` (FGSM, ODIN),
//! `grad_last_layer` (GradNorm, closed form), and the fixture trainer
//! (weight gradients). Maxpool routes its gradient to the argmax element
//! with the lowest index on ties; relu uses subgradient 0 at the kink.

use super::{forward, ForwardTrace, LayerSpec, Network};
use crate::error::{Error, Result};
use crate::tensor::{softmax_f64, Tensor};

/// Loss functions with gradients taken with respect to the network input.
#[derive(Debug, Clone, Copy)]
pub enum InputLoss {
    /// `−log softmax(f)[target]`
    CrossEntropy { target: usize },
    /// `−log max_c softmax(f/T)[c]` (the ODIN preprocessing loss)
    NegLogMsp { temperature: f64 },
}

/// Per-layer weight gradients collected during a backward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerGrads {
    Dense { dw: Vec<f32>, db: Vec<f32> },
    Conv2d { dw: Vec<f32>, db: Vec<f32> },
    None,
}

/// ∂loss/∂input for one input.
pub fn grad_input(net: &Network, x: &Tensor, loss: InputLoss) -> Result<Tensor> {
    let trace = forward(net, x)?;
    let dlogits = loss_grad_logits(&trace.logits, loss, net.class_count)?;
    let (dinput, _) = backward(net, x, &trace.named_activations, &dlogits, false)?;
    Ok(dinput)
}

fn loss_grad_logits(logits: &Tensor, loss: InputLoss, class_count: usize) -> Result<Vec<f32>> {
    match loss {
        InputLoss::CrossEntropy { target } => {
            if target >= class_count {
                return Err(Error::domain("target", target as f64, format!("< {class_count}")));
            }
            let p = softmax_f64(logits.data(), 1.0);
            Ok((0..class_count)
                .map(|j| (p[j] - if j == target { 1.0 } else { 0.0 }) as f32)
                .collect())
        }
        InputLoss::NegLogMsp { temperature } => {
            if temperature <= 0.0 || temperature.is_nan() {
                return Err(Error::domain("temperature", temperature, "> 0"));
            }
            let p = softmax_f64(logits.data(), temperature);
            let top = logits.argmax();
            Ok((0..class_count)
                .map(|j| ((p[j] - if j == top { 1.0 } else { 0.0 }) / temperature) as f32)
                .collect())
        }
    }
}

/// Gradient of `KL(uniform ‖ softmax(f/T))` with respect to the final dense
/// weights and bias, in closed form: row `j` of the `C×(d+1)` result is
/// `(1/T)·(softmax(f/T)_j − 1/C)·[z; 1]` with `z` the classifier input.
pub fn grad_last_layer(net: &Network, x: &Tensor, temperature: f64) -> Result<Tensor> {
    if temperature <= 0.0 || temperature.is_nan() {
        return Err(Error::domain("temperature", temperature, "> 0"));
    }
    let trace = forward(net, x)?;
    grad_last_layer_from_trace(net, &trace, temperature)
}

/// As [`grad_last_layer`] but reusing an existing trace.
pub fn grad_last_layer_from_trace(net: &Network, trace: &ForwardTrace, temperature: f64) -> Result<Tensor> {
    if temperature <= 0.0 || temperature.is_nan() {
        return Err(Error::domain("temperature", temperature, "> 0"));
    }
    let c = net.class_count;
    let z = trace.classifier_input.data();
    let d = z.len();
    let p = softmax_f64(trace.logits.data(), temperature);
    let mut out = vec![0.0f32; c * (d + 1)];
    for j in 0..c {
        let coeff = (p[j] - 1.0 / c as f64) / temperature;
        for (k, &zk) in z.iter().enumerate() {
            out[j * (d + 1) + k] = (coeff * zk as f64) as f32;
        }
        out[j * (d + 1) + d] = coeff as f32;
    }
    Tensor::new(vec![c, d + 1], out)
}

/// Propagate `dlogits` back to the input; optionally collect weight grads.
///
/// `acts` must be the per-layer outputs of a forward pass on `x`.
pub(crate) fn backward(
    net: &Network,
    x: &Tensor,
    acts: &[Tensor],
    dlogits: &[f32],
    want_weight_grads: bool,
) -> Result<(Tensor, Vec<LayerGrads>)> {
    let n = net.layers.len();
    let mut grads = vec![LayerGrads::None; n];
    let mut dout: Vec<f32> = dlogits.to_vec();
    for idx in (0..n).rev() {
        let input = if idx == 0 { x } else { &acts[idx - 1] };
        let output = &acts[idx];
        let mut din = vec![0.0f32; input.len()];
        match &net.layers[idx] {
            LayerSpec::Dense { w, .. } => {
                let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
                for j in 0..in_dim {
                    let mut acc = 0.0f64;
                    for i in 0..out_dim {
                        acc += w.data()[i * in_dim + j] as f64 * dout[i] as f64;
                    }
                    din[j] = acc as f32;
                }
                if want_weight_grads {
                    let mut dw = vec![0.0f32; out_dim * in_dim];
                    for i in 0..out_dim {
                        for j in 0..in_dim {
                            dw[i * in_dim + j] = dout[i] * input.data()[j];
                        }
                    }
                    grads[idx] = LayerGrads::Dense { dw, db: dout.clone() };
                }
            }
            LayerSpec::Conv2d { w, stride, padding, .. } => {
                let (c, h, wd) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let (f, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
                let (oh, ow) = (output.shape()[1], output.shape()[2]);
                let mut dw = vec![0.0f32; w.len()];
                let mut db = vec![0.0f32; f];
                for of in 0..f {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = dout[(of * oh + oy) * ow + ox];
                            if g == 0.0 {
                                continue;
                            }
                            db[of] += g;
                            for ic in 0..c {
                                for ky in 0..kh {
                                    let iy = (oy * stride + ky) as isize - *padding as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kw {
                                        let ix = (ox * stride + kx) as isize - *padding as isize;
                                        if ix < 0 || ix >= wd as isize {
                                            continue;
                                        }
                                        let ii = (ic * h + iy as usize) * wd + ix as usize;
                                        let wi = ((of * c + ic) * kh + ky) * kw + kx;
                                        din[ii] += w.data()[wi] * g;
                                        if want_weight_grads {
                                            dw[wi] += input.data()[ii] * g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if want_weight_grads {
                    grads[idx] = LayerGrads::Conv2d { dw, db };
                }
            }
            LayerSpec::MaxPool2d { kernel, stride } => {
                let (c, h, wd) = (input.shape()[0], input.shape()[1], input.shape()[2]);
                let (oh, ow) = (output.shape()[1], output.shape()[2]);
                for ic in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            // Recover the argmax; first index wins ties.
                            let mut best_idx = 0usize;
                            let mut best = f32::NEG_INFINITY;
                            for ky in 0..*kernel {
                                for kx in 0..*kernel {
                                    let ii = (ic * h + oy * stride + ky) * wd + ox * stride + kx;
                                    if input.data()[ii] > best {
                                        best = input.data()[ii];
                                        best_idx = ii;
                                    }
                                }
                            }
                            din[best_idx] += dout[(ic * oh + oy) * ow + ox];
                        }
                    }
                }
            }
            LayerSpec::BatchNorm { gamma, var, .. } => {
                let dim = gamma.len();
                let per = input.len() / dim;
                for ch in 0..dim {
                    let scale = gamma.data()[ch] / (var.data()[ch] + 1e-5).sqrt();
                    for i in 0..per {
                        din[ch * per + i] = scale * dout[ch * per + i];
                    }
                }
            }
            LayerSpec::Relu => {
                for (i, &v) in input.data().iter().enumerate() {
                    din[i] = if v > 0.0 { dout[i] } else { 0.0 };
                }
            }
            LayerSpec::Elu { alpha } => {
                let a = *alpha as f64;
                for (i, &v) in input.data().iter().enumerate() {
                    let slope = if v > 0.0 { 1.0 } else { a * (v as f64).exp() };
                    din[i] = (slope * dout[i] as f64) as f32;
                }
            }
            LayerSpec::Flatten => {
                din.copy_from_slice(&dout);
            }
        }
        dout = din;
    }
    let dinput = Tensor::new(x.shape().to_vec(), dout)?;
    Ok((dinput, grads))
}
