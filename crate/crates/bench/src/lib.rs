//! Shared fixtures for the pipeline benchmarks.

use oodmon_core::data::{split_dataset, synth_blobs, LabeledDataset, SplitDataset};
use oodmon_core::nn::{init_mlp, train_classifier, Network};
use oodmon_core::tensor::Tensor;
use rand::{Rng, SeedableRng};

pub struct BenchSetup {
    pub net: Network,
    pub dataset: LabeledDataset,
    pub id: SplitDataset,
}

/// Trained 3-class blob classifier at the benchmark scale.
pub fn setup(per_class: usize) -> BenchSetup {
    let dataset = synth_blobs(3, per_class, &[1, 8, 8], 11, 0.8).expect("blobs");
    let arch = init_mlp(&[1, 8, 8], &[32, 32], 3, 11);
    let net = train_classifier(&dataset, &arch, 8, 0.3, 16, 11).expect("train");
    let id = split_dataset(&dataset, 11).expect("split");
    BenchSetup { net, dataset, id }
}

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rand::rngs::StdRng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(-1.0f32..1.0)).collect()).expect("tensor")
}

pub fn random_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rand::rngs::StdRng::seed_from_u64(seed);
    (0..n).map(|_| r.gen::<f64>()).collect()
}
