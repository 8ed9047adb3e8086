//! Network representation and the forward pass with activation taps.
//!
//! A [`Network`] is an ordered list of layers ending in a dense layer that
//! produces one logit per class; softmax is never a layer, scorers apply it
//! themselves. Each forward pass returns a [`ForwardTrace`] carrying the
//! logits, every intermediate activation, the tapped "penultimate" feature
//! vector, and the input — the observables monitors consume.

mod autodiff;
mod format;
mod train;

pub use autodiff::{grad_input, grad_last_layer, grad_last_layer_from_trace, InputLoss};
pub use format::{load_network, network_from_json, network_to_json, save_network};
pub use train::{init_mlp, train_classifier};

use crate::error::{Error, Result};
use crate::tensor::{conv2d, matmul, maxpool2d, Tensor};

/// One layer of a feedforward network. Weights follow the shapes produced by
/// the `oodmon-net/1` file format.
#[derive(Debug, Clone)]
pub enum LayerSpec {
    /// Affine layer; `w` is `out×in`, `b` is `out`.
    Dense { w: Tensor, b: Tensor },
    /// Cross-correlation; `w` is `out_ch×in_ch×kh×kw`, `b` is `out_ch`.
    Conv2d {
        w: Tensor,
        b: Tensor,
        stride: usize,
        padding: usize,
    },
    MaxPool2d { kernel: usize, stride: usize },
    /// Inference-mode batch normalization over the leading axis
    /// (channels for C×H×W inputs, neurons for vectors).
    BatchNorm {
        gamma: Tensor,
        beta: Tensor,
        mean: Tensor,
        var: Tensor,
    },
    Relu,
    Elu { alpha: f32 },
    Flatten,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::Relu => "relu",
            LayerSpec::Elu { .. } => "elu",
            LayerSpec::Flatten => "flatten",
        }
    }
}

/// A validated feedforward network.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<LayerSpec>,
    pub class_count: usize,
    pub input_shape: Vec<usize>,
    /// Index of the layer whose *input* is the tapped penultimate feature.
    /// Defaults to the final dense layer.
    pub penultimate_tap: usize,
}

/// Record of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Tensor,
    /// One value per class, no softmax applied.
    pub logits: Tensor,
    /// Activation tapped at `penultimate_tap` (flattened).
    pub penultimate: Tensor,
    /// Input of the final dense layer (flattened); equals `penultimate`
    /// under the default tap. Activation-shaping monitors always use this.
    pub classifier_input: Tensor,
    /// Output of every layer, indexed by layer position.
    pub named_activations: Vec<Tensor>,
    /// Argmax of the logits; lowest index wins ties.
    pub predicted_class: usize,
}

impl Network {
    /// Build and validate; `penultimate_tap = None` selects the final dense layer.
    pub fn new(
        layers: Vec<LayerSpec>,
        class_count: usize,
        input_shape: Vec<usize>,
        penultimate_tap: Option<usize>,
    ) -> Result<Self> {
        let last_dense = layers
            .iter()
            .rposition(|l| matches!(l, LayerSpec::Dense { .. }))
            .ok_or_else(|| Error::Invalid("network has no dense layer".into()))?;
        if last_dense != layers.len() - 1 {
            return Err(Error::Layer {
                index: layers.len() - 1,
                detail: "final layer must be dense".into(),
            });
        }
        let tap = penultimate_tap.unwrap_or(last_dense);
        if tap >= layers.len() {
            return Err(Error::Invalid(format!(
                "penultimate_tap {tap} out of range for {} layers",
                layers.len()
            )));
        }
        let net = Network {
            layers,
            class_count,
            input_shape,
            penultimate_tap: tap,
        };
        net.validate()?;
        Ok(net)
    }

    /// Output shape of every layer, checking compatibility as it goes.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (index, layer) in self.layers.iter().enumerate() {
            shape = layer_output_shape(layer, &shape).map_err(|detail| Error::Layer { index, detail })?;
            out.push(shape.clone());
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        let shapes = self.layer_shapes()?;
        let final_shape = shapes.last().expect("validated non-empty");
        if final_shape.as_slice() != [self.class_count] {
            return Err(Error::Layer {
                index: self.layers.len() - 1,
                detail: format!(
                    "final layer produces {:?}, expected [{}] logits",
                    final_shape, self.class_count
                ),
            });
        }
        for (index, layer) in self.layers.iter().enumerate() {
            if let LayerSpec::BatchNorm { var, .. } = layer {
                if var.data().iter().any(|&v| v < 0.0) {
                    return Err(Error::Layer {
                        index,
                        detail: "batchnorm running_var has negative entries".into(),
                    });
                }
            }
        }
        Ok(())
    }

    /// The final dense layer's weights and bias.
    pub fn final_dense(&self) -> (&Tensor, &Tensor) {
        match self.layers.last() {
            Some(LayerSpec::Dense { w, b }) => (w, b),
            _ => unreachable!("validated: final layer is dense"),
        }
    }

    /// Dimension of the input of the final dense layer.
    pub fn classifier_input_dim(&self) -> usize {
        self.final_dense().0.shape()[1]
    }

    /// Dimension of the tapped penultimate feature (flattened).
    pub fn penultimate_dim(&self) -> Result<usize> {
        let shapes = self.layer_shapes()?;
        let tap_input: usize = if self.penultimate_tap == 0 {
            self.input_shape.iter().product()
        } else {
            shapes[self.penultimate_tap - 1].iter().product()
        };
        Ok(tap_input)
    }
}

fn layer_output_shape(layer: &LayerSpec, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
    match layer {
        LayerSpec::Dense { w, b } => {
            let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
            if b.shape() != [out_dim] {
                return Err(format!("dense bias shape {:?}, expected [{out_dim}]", b.shape()));
            }
            if input != [in_dim] {
                return Err(format!("dense expects input [{in_dim}], got {input:?}"));
            }
            Ok(vec![out_dim])
        }
        LayerSpec::Conv2d { w, b, stride, padding } => {
            if input.len() != 3 {
                return Err(format!("conv2d expects C×H×W input, got {input:?}"));
            }
            let (f, c, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
            if b.shape() != [f] {
                return Err(format!("conv2d bias shape {:?}, expected [{f}]", b.shape()));
            }
            if input[0] != c {
                return Err(format!("conv2d expects {c} input channels, got {}", input[0]));
            }
            if *stride == 0 {
                return Err("conv2d stride must be positive".into());
            }
            let (h, w_) = (input[1], input[2]);
            if kh > h + 2 * padding || kw > w_ + 2 * padding {
                return Err(format!("conv2d kernel {kh}×{kw} exceeds padded input"));
            }
            Ok(vec![f, (h + 2 * padding - kh) / stride + 1, (w_ + 2 * padding - kw) / stride + 1])
        }
        LayerSpec::MaxPool2d { kernel, stride } => {
            if input.len() != 3 {
                return Err(format!("maxpool2d expects C×H×W input, got {input:?}"));
            }
            if *stride == 0 || *kernel == 0 {
                return Err("maxpool2d kernel and stride must be positive".into());
            }
            let (c, h, w) = (input[0], input[1], input[2]);
            if *kernel > h || *kernel > w {
                return Err(format!("maxpool2d kernel {kernel} exceeds input {h}×{w}"));
            }
            Ok(vec![c, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
        }
        LayerSpec::BatchNorm { gamma, beta, mean, var } => {
            let dim = gamma.len();
            if beta.len() != dim || mean.len() != dim || var.len() != dim {
                return Err("batchnorm parameter lengths differ".into());
            }
            let leading = input[0];
            if leading != dim {
                return Err(format!("batchnorm over {dim} channels, input leading dim {leading}"));
            }
            Ok(input.to_vec())
        }
        LayerSpec::Relu | LayerSpec::Elu { .. } => Ok(input.to_vec()),
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
    }
}

/// Apply one layer to an activation. Used by forward and the trainer.
pub(crate) fn apply_layer(layer: &LayerSpec, x: &Tensor) -> Result<Tensor> {
    match layer {
        LayerSpec::Dense { w, b } => {
            let col = x.reshape(vec![x.len(), 1])?;
            let y = matmul(w, &col)?;
            let mut data = y.data().to_vec();
            for (v, bv) in data.iter_mut().zip(b.data()) {
                *v += bv;
            }
            Tensor::new(vec![b.len()], data)
        }
        LayerSpec::Conv2d { w, b, stride, padding } => {
            let mut y = conv2d(x, w, *stride, *padding)?;
            let (f, oh, ow) = (y.shape()[0], y.shape()[1], y.shape()[2]);
            let data = y.data_mut();
            for of in 0..f {
                let bias = b.data()[of];
                for i in 0..oh * ow {
                    data[of * oh * ow + i] += bias;
                }
            }
            Ok(y)
        }
        LayerSpec::MaxPool2d { kernel, stride } => maxpool2d(x, *kernel, *stride),
        LayerSpec::BatchNorm { gamma, beta, mean, var } => {
            let dim = gamma.len();
            let per = x.len() / dim;
            let mut data = x.data().to_vec();
            for c in 0..dim {
                let scale = gamma.data()[c] / (var.data()[c] + 1e-5).sqrt();
                let (m, bta) = (mean.data()[c], beta.data()[c]);
                for i in 0..per {
                    let v = &mut data[c * per + i];
                    *v = scale * (*v - m) + bta;
                }
            }
            Tensor::new(x.shape().to_vec(), data)
        }
        LayerSpec::Relu => {
            let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
            Tensor::new(x.shape().to_vec(), data)
        }
        LayerSpec::Elu { alpha } => {
            let a = *alpha as f64;
            let data = x
                .data()
                .iter()
                .map(|&v| {
                    if v > 0.0 {
                        v
                    } else {
                        (a * ((v as f64).exp() - 1.0)) as f32
                    }
                })
                .collect();
            Tensor::new(x.shape().to_vec(), data)
        }
        LayerSpec::Flatten => x.reshape(vec![x.len()]),
    }
}

/// Run the network on one input, recording every tap.
pub fn forward(net: &Network, x: &Tensor) -> Result<ForwardTrace> {
    if x.shape() != net.input_shape.as_slice() {
        return Err(Error::shape(
            "forward input",
            format!("{:?}", net.input_shape),
            format!("{:?}", x.shape()),
        ));
    }
    let mut acts: Vec<Tensor> = Vec::with_capacity(net.layers.len());
    let mut cur = x.clone();
    for layer in &net.layers {
        cur = apply_layer(layer, &cur)?;
        acts.push(cur.clone());
    }
    let logits = acts.last().expect("non-empty network").clone();
    let predicted_class = logits.argmax();
    let input_of = |idx: usize| -> Tensor {
        if idx == 0 {
            x.clone()
        } else {
            acts[idx - 1].clone()
        }
    };
    let penultimate = {
        let t = input_of(net.penultimate_tap);
        t.reshape(vec![t.len()]).expect("flatten tap")
    };
    let classifier_input = {
        let t = input_of(net.layers.len() - 1);
        t.reshape(vec![t.len()]).expect("flatten classifier input")
    };
    Ok(ForwardTrace {
        input: x.clone(),
        logits,
        penultimate,
        classifier_input,
        named_activations: acts,
        predicted_class,
    })
}
