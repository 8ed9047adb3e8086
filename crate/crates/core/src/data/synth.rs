//! Synthetic in-distribution data: per-class template patterns plus noise.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const BLOB_NOISE_STD: f64 = 0.05;

/// Pixel quantum for generated data. Generated pixels land on a dyadic grid
/// so that `1 − x` is exact in f32 and inversion stays an involution.
const QUANTUM: f32 = 1.0 / 1024.0;

/// Class-blob images: class `c` is `clamp(0.5 + separation·template_c + noise)`
/// with a fixed random template per class. Deterministic per seed.
pub fn synth_blobs(
    classes: usize,
    per_class: usize,
    image: &[usize],
    seed: u64,
    separation: f64,
) -> Result<LabeledDataset> {
    if classes == 0 || classes > 256 {
        return Err(Error::domain("classes", classes as f64, "1..=256"));
    }
    if image.len() != 3 {
        return Err(Error::shape("synth image dims", "C×H×W", format!("{image:?}")));
    }
    let pixels_per: usize = image.iter().product();
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let templates: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..pixels_per).map(|_| rng.gen_range(-0.5..0.5)).collect())
        .collect();
    let noise = Normal::new(0.0f64, BLOB_NOISE_STD).expect("valid std");
    let n = classes * per_class;
    let mut data = Vec::with_capacity(n * pixels_per);
    let mut labels = Vec::with_capacity(n);
    for c in 0..classes {
        for _ in 0..per_class {
            for t in &templates[c] {
                let v = 0.5 + separation * t + noise.sample(&mut rng);
                data.push(quantize(v.clamp(0.0, 1.0) as f32));
            }
            labels.push(c as u8);
        }
    }
    let mut shape = vec![n];
    shape.extend_from_slice(image);
    LabeledDataset::new(Tensor::new(shape, data)?, labels, format!("blobs-{seed}"))
}

fn quantize(v: f32) -> f32 {
    ((v / QUANTUM).round() * QUANTUM).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_per_class_gives_empty_dataset() {
        let ds = synth_blobs(3, 0, &[1, 2, 2], 0, 1.0).unwrap();
        assert_eq!(ds.len(), 0);
    }

    #[test]
    fn same_seed_identical_bytes() {
        let a = synth_blobs(2, 5, &[1, 3, 3], 77, 0.5).unwrap();
        let b = synth_blobs(2, 5, &[1, 3, 3], 77, 0.5).unwrap();
        assert_eq!(a.images().data(), b.images().data());
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn large_separation_is_linearly_separable() {
        // Nearest-class-template classification stands in for the linear
        // classifier; with big separation it must be near-perfect.
        let ds = synth_blobs(3, 30, &[1, 4, 4], 5, 1.0).unwrap();
        let mut centroids = vec![vec![0.0f64; 16]; 3];
        let mut counts = [0usize; 3];
        for i in 0..ds.len() {
            let c = ds.label(i) as usize;
            counts[c] += 1;
            for (j, p) in ds.pixels(i).iter().enumerate() {
                centroids[c][j] += *p as f64;
            }
        }
        for (c, cent) in centroids.iter_mut().enumerate() {
            for v in cent.iter_mut() {
                *v /= counts[c] as f64;
            }
        }
        let mut hits = 0;
        for i in 0..ds.len() {
            let px = ds.pixels(i);
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = px.iter().zip(&centroids[a]).map(|(p, m)| (*p as f64 - m).powi(2)).sum();
                    let db: f64 = px.iter().zip(&centroids[b]).map(|(p, m)| (*p as f64 - m).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == ds.label(i) as usize {
                hits += 1;
            }
        }
        assert!(hits as f64 / ds.len() as f64 >= 0.99);
    }
}
