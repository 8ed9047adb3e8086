//! Minibatch SGD on cross-entropy, used to produce desk-scale fixture
//! networks. Deterministic given the seed: fixed shuffle order, sequential
//! gradient accumulation. Batchnorm statistics are frozen after a single
//! estimation pass before training starts; gamma/beta stay untouched.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use super::autodiff::{backward, LayerGrads};
use super::{apply_layer, LayerSpec, Network};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::{softmax_f64, Tensor};

/// Train `arch` on `dataset` with plain SGD and return the trained network.
pub fn train_classifier(
    dataset: &LabeledDataset,
    arch: &Network,
    epochs: usize,
    lr: f64,
    batch: usize,
    seed: u64,
) -> Result<Network> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("training dataset".into()));
    }
    if batch == 0 {
        return Err(Error::domain("batch", 0.0, "positive"));
    }
    for i in 0..dataset.len() {
        let label = dataset.label(i) as usize;
        if label >= arch.class_count {
            return Err(Error::domain(
                "label",
                label as f64,
                format!("< class_count = {}", arch.class_count),
            ));
        }
    }
    let mut net = arch.clone();
    estimate_batchnorm_stats(&mut net, dataset)?;

    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for _epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut batch_grads: Option<Vec<LayerGrads>> = None;
            for &i in chunk {
                let x = dataset.image(i)?;
                let mut acts = Vec::with_capacity(net.layers.len());
                let mut cur = x.clone();
                for layer in &net.layers {
                    cur = apply_layer(layer, &cur)?;
                    acts.push(cur.clone());
                }
                let logits = acts.last().unwrap();
                let p = softmax_f64(logits.data(), 1.0);
                let target = dataset.label(i) as usize;
                let dlogits: Vec<f32> = (0..net.class_count)
                    .map(|j| (p[j] - if j == target { 1.0 } else { 0.0 }) as f32)
                    .collect();
                let (_, grads) = backward(&net, &x, &acts, &dlogits, true)?;
                batch_grads = Some(match batch_grads {
                    None => grads,
                    Some(mut acc) => {
                        accumulate(&mut acc, grads);
                        acc
                    }
                });
            }
            if let Some(grads) = batch_grads {
                apply_sgd_step(&mut net, &grads, lr / chunk.len() as f64);
            }
        }
    }
    Ok(net)
}

fn accumulate(acc: &mut [LayerGrads], add: Vec<LayerGrads>) {
    for (a, b) in acc.iter_mut().zip(add) {
        match (a, b) {
            (LayerGrads::Dense { dw, db }, LayerGrads::Dense { dw: dw2, db: db2 })
            | (LayerGrads::Conv2d { dw, db }, LayerGrads::Conv2d { dw: dw2, db: db2 }) => {
                for (x, y) in dw.iter_mut().zip(dw2) {
                    *x += y;
                }
                for (x, y) in db.iter_mut().zip(db2) {
                    *x += y;
                }
            }
            _ => {}
        }
    }
}

fn apply_sgd_step(net: &mut Network, grads: &[LayerGrads], lr: f64) {
    for (layer, g) in net.layers.iter_mut().zip(grads) {
        match (layer, g) {
            (LayerSpec::Dense { w, b }, LayerGrads::Dense { dw, db })
            | (LayerSpec::Conv2d { w, b, .. }, LayerGrads::Conv2d { dw, db }) => {
                for (wv, gv) in w.data_mut().iter_mut().zip(dw) {
                    *wv -= (lr * *gv as f64) as f32;
                }
                for (bv, gv) in b.data_mut().iter_mut().zip(db) {
                    *bv -= (lr * *gv as f64) as f32;
                }
            }
            _ => {}
        }
    }
}

/// One pass over the dataset per batchnorm layer, setting its running
/// mean/var to the empirical statistics of its input.
fn estimate_batchnorm_stats(net: &mut Network, dataset: &LabeledDataset) -> Result<()> {
    let bn_indices: Vec<usize> = net
        .layers
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, LayerSpec::BatchNorm { .. }))
        .map(|(i, _)| i)
        .collect();
    for idx in bn_indices {
        let dim = match &net.layers[idx] {
            LayerSpec::BatchNorm { gamma, .. } => gamma.len(),
            _ => unreachable!(),
        };
        let mut sum = vec![0.0f64; dim];
        let mut sumsq = vec![0.0f64; dim];
        let mut count = 0usize;
        for i in 0..dataset.len() {
            let mut cur = dataset.image(i)?;
            for layer in &net.layers[..idx] {
                cur = apply_layer(layer, &cur)?;
            }
            let per = cur.len() / dim;
            for c in 0..dim {
                for k in 0..per {
                    let v = cur.data()[c * per + k] as f64;
                    sum[c] += v;
                    sumsq[c] += v * v;
                }
            }
            count += per;
        }
        if let LayerSpec::BatchNorm { mean, var, .. } = &mut net.layers[idx] {
            for c in 0..dim {
                let m = sum[c] / count as f64;
                let v = (sumsq[c] / count as f64 - m * m).max(0.0);
                mean.data_mut()[c] = m as f32;
                var.data_mut()[c] = v as f32;
            }
        }
    }
    Ok(())
}

/// Random-initialized MLP fixture: flatten, then dense layers with relu
/// between them. `input_shape` is the image shape, e.g. `[1, 8, 8]`.
pub fn init_mlp(input_shape: &[usize], hidden: &[usize], class_count: usize, seed: u64) -> Network {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let input_dim: usize = input_shape.iter().product();
    let mut layers = Vec::new();
    if input_shape.len() > 1 {
        layers.push(LayerSpec::Flatten);
    }
    let mut dims = vec![input_dim];
    dims.extend_from_slice(hidden);
    dims.push(class_count);
    for (li, win) in dims.windows(2).enumerate() {
        let (i, o) = (win[0], win[1]);
        let scale = (2.0 / i as f64).sqrt() as f32;
        let w: Vec<f32> = (0..i * o).map(|_| rng.gen_range(-1.0f32..1.0) * scale).collect();
        // Pixels center at 0.5; aim the first layer's units there (plus a
        // small positive margin) so relu units start alive.
        let b: Vec<f32> = if li == 0 {
            (0..o)
                .map(|r| 0.05 - 0.5 * w[r * i..(r + 1) * i].iter().sum::<f32>())
                .collect()
        } else {
            vec![0.05; o]
        };
        layers.push(LayerSpec::Dense {
            w: Tensor::new(vec![o, i], w).expect("init weights"),
            b: Tensor::new(vec![o], b).expect("init bias"),
        });
        if li + 2 < dims.len() {
            layers.push(LayerSpec::Relu);
        }
    }
    Network::new(layers, class_count, input_shape.to_vec(), None).expect("valid mlp")
}
