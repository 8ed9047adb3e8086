//! The `oodmon-net/1` JSON network format.
//!
//! Top level: `{"format":"oodmon-net/1","input_shape":[...],"class_count":N,
//! "penultimate_tap":int|null,"layers":[...]}`. Weights are row-major decimal
//! JSON numbers; serde's f32 round-trip keeps save → load bit-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LayerSpec, Network};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) const NET_FORMAT: &str = "oodmon-net/1";

#[derive(Serialize, Deserialize)]
struct NetFile {
    format: String,
    input_shape: Vec<usize>,
    class_count: usize,
    penultimate_tap: Option<usize>,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum LayerFile {
    Dense {
        #[serde(rename = "in")]
        in_dim: usize,
        out: usize,
        w: Vec<f32>,
        b: Vec<f32>,
    },
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        w: Vec<f32>,
        b: Vec<f32>,
    },
    Maxpool2d {
        kernel: usize,
        stride: usize,
    },
    Batchnorm {
        dim: usize,
        gamma: Vec<f32>,
        beta: Vec<f32>,
        mean: Vec<f32>,
        var: Vec<f32>,
    },
    Relu,
    Elu {
        #[serde(default = "default_alpha")]
        alpha: f32,
    },
    Flatten,
}

fn default_alpha() -> f32 {
    1.0
}

fn layer_from_file(index: usize, lf: LayerFile) -> Result<LayerSpec> {
    let bad = |detail: String| Error::Layer { index, detail };
    match lf {
        LayerFile::Dense { in_dim, out, w, b } => {
            if w.len() != in_dim * out {
                return Err(bad(format!(
                    "dense weight length {} != out*in = {}",
                    w.len(),
                    in_dim * out
                )));
            }
            if b.len() != out {
                return Err(bad(format!("dense bias length {} != out = {out}", b.len())));
            }
            Ok(LayerSpec::Dense {
                w: Tensor::new(vec![out, in_dim], w)?,
                b: Tensor::new(vec![out], b)?,
            })
        }
        LayerFile::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            padding,
            w,
            b,
        } => {
            let expect = out_ch * in_ch * kernel[0] * kernel[1];
            if w.len() != expect {
                return Err(bad(format!("conv2d weight length {} != {expect}", w.len())));
            }
            if b.len() != out_ch {
                return Err(bad(format!("conv2d bias length {} != out_ch = {out_ch}", b.len())));
            }
            Ok(LayerSpec::Conv2d {
                w: Tensor::new(vec![out_ch, in_ch, kernel[0], kernel[1]], w)?,
                b: Tensor::new(vec![out_ch], b)?,
                stride,
                padding,
            })
        }
        LayerFile::Maxpool2d { kernel, stride } => Ok(LayerSpec::MaxPool2d { kernel, stride }),
        LayerFile::Batchnorm {
            dim,
            gamma,
            beta,
            mean,
            var,
        } => {
            for (name, v) in [("gamma", &gamma), ("beta", &beta), ("mean", &mean), ("var", &var)] {
                if v.len() != dim {
                    return Err(bad(format!("batchnorm {name} length {} != dim = {dim}", v.len())));
                }
            }
            Ok(LayerSpec::BatchNorm {
                gamma: Tensor::new(vec![dim], gamma)?,
                beta: Tensor::new(vec![dim], beta)?,
                mean: Tensor::new(vec![dim], mean)?,
                var: Tensor::new(vec![dim], var)?,
            })
        }
        LayerFile::Relu => Ok(LayerSpec::Relu),
        LayerFile::Elu { alpha } => Ok(LayerSpec::Elu { alpha }),
        LayerFile::Flatten => Ok(LayerSpec::Flatten),
    }
}

fn layer_to_file(layer: &LayerSpec) -> LayerFile {
    match layer {
        LayerSpec::Dense { w, b } => LayerFile::Dense {
            in_dim: w.shape()[1],
            out: w.shape()[0],
            w: w.data().to_vec(),
            b: b.data().to_vec(),
        },
        LayerSpec::Conv2d { w, b, stride, padding } => LayerFile::Conv2d {
            in_ch: w.shape()[1],
            out_ch: w.shape()[0],
            kernel: [w.shape()[2], w.shape()[3]],
            stride: *stride,
            padding: *padding,
            w: w.data().to_vec(),
            b: b.data().to_vec(),
        },
        LayerSpec::MaxPool2d { kernel, stride } => LayerFile::Maxpool2d {
            kernel: *kernel,
            stride: *stride,
        },
        LayerSpec::BatchNorm { gamma, beta, mean, var } => LayerFile::Batchnorm {
            dim: gamma.len(),
            gamma: gamma.data().to_vec(),
            beta: beta.data().to_vec(),
            mean: mean.data().to_vec(),
            var: var.data().to_vec(),
        },
        LayerSpec::Relu => LayerFile::Relu,
        LayerSpec::Elu { alpha } => LayerFile::Elu { alpha: *alpha },
        LayerSpec::Flatten => LayerFile::Flatten,
    }
}

/// Parse a network from JSON text.
pub fn network_from_json(text: &str) -> Result<Network> {
    let file: NetFile = serde_json::from_str(text)?;
    if file.format != NET_FORMAT {
        return Err(Error::Invalid(format!(
            "unsupported network format {:?}, expected {NET_FORMAT:?}",
            file.format
        )));
    }
    let layers = file
        .layers
        .into_iter()
        .enumerate()
        .map(|(i, lf)| layer_from_file(i, lf))
        .collect::<Result<Vec<_>>>()?;
    Network::new(layers, file.class_count, file.input_shape, file.penultimate_tap)
}

/// Serialize a network to JSON text.
pub fn network_to_json(net: &Network) -> Result<String> {
    let file = NetFile {
        format: NET_FORMAT.to_string(),
        input_shape: net.input_shape.clone(),
        class_count: net.class_count,
        penultimate_tap: Some(net.penultimate_tap),
        layers: net.layers.iter().map(layer_to_file).collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Load and validate a network file.
pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    network_from_json(&text)
}

/// Write a network file.
pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, network_to_json(net)?)?;
    Ok(())
}
