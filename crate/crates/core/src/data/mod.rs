//! Datasets, splits, synthetic in-distribution data, and the OOD taxonomy.

mod container;
mod suite;
mod synth;
mod transform;

pub use container::{dataset_from_bytes, dataset_to_bytes, load_dataset, save_dataset};
pub use suite::{
    apply_generated, build_ood_suite, default_intensities, OodClassId, OodEntry, OodFamily, OodSuite,
    GENERATED_VARIANTS,
};
pub use synth::synth_blobs;
pub use transform::{add_noise, fgsm, perturb, NoiseVariant, PerturbVariant};

use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Images in `[0,1]` with one small-integer label per image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `n×C×H×W`.
    images: Tensor,
    labels: Vec<u8>,
    pub name: String,
}

impl LabeledDataset {
    pub fn new(images: Tensor, labels: Vec<u8>, name: impl Into<String>) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::shape("dataset images", "n×C×H×W", format!("{:?}", images.shape())));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::shape(
                "dataset labels",
                format!("{}", images.shape()[0]),
                format!("{}", labels.len()),
            ));
        }
        if let Some(bad) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("pixel {bad} outside [0,1]")));
        }
        Ok(LabeledDataset {
            images,
            labels,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Shape of one image, `[C, H, W]`.
    pub fn image_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    /// Copy of image `i` as a `C×H×W` tensor.
    pub fn image(&self, i: usize) -> Result<Tensor> {
        let per: usize = self.image_shape().iter().product();
        let data = self.images.data()[i * per..(i + 1) * per].to_vec();
        Tensor::new(self.image_shape().to_vec(), data)
    }

    /// Raw pixels of image `i`.
    pub fn pixels(&self, i: usize) -> &[f32] {
        let per: usize = self.image_shape().iter().product();
        &self.images.data()[i * per..(i + 1) * per]
    }

    /// New dataset with the same labels and transformed pixel buffer.
    pub(crate) fn with_pixels(&self, pixels: Vec<f32>, name: impl Into<String>) -> Result<Self> {
        let images = Tensor::new(self.images.shape().to_vec(), pixels)?;
        LabeledDataset::new(images, self.labels.clone(), name)
    }

    /// Subset by index list, preserving order.
    pub fn select(&self, indices: &[usize], name: impl Into<String>) -> Result<Self> {
        let per: usize = self.image_shape().iter().product();
        let mut pixels = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            pixels.extend_from_slice(self.pixels(i));
            labels.push(self.labels[i]);
        }
        let mut shape = self.images.shape().to_vec();
        shape[0] = indices.len();
        LabeledDataset::new(Tensor::new(shape, pixels)?, labels, name)
    }
}

/// Disjoint fit / validation / test portions of one dataset.
///
/// Monitors estimate state on `fit`, the optimizer reads `validation`,
/// and reports read `test` — the type keeps the three apart.
#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub fit: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

/// Stratified 60/20/20 split, deterministic per seed.
pub fn split_dataset(ds: &LabeledDataset, seed: u64) -> Result<SplitDataset> {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut by_class: std::collections::BTreeMap<u8, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..ds.len() {
        by_class.entry(ds.label(i)).or_default().push(i);
    }
    let (mut fit, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (_, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_fit = (n as f64 * 0.6).round() as usize;
        let n_val = (n as f64 * 0.2).round() as usize;
        for (k, i) in idx.into_iter().enumerate() {
            if k < n_fit {
                fit.push(i);
            } else if k < n_fit + n_val {
                val.push(i);
            } else {
                test.push(i);
            }
        }
    }
    fit.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitDataset {
        fit: ds.select(&fit, format!("{}/fit", ds.name))?,
        validation: ds.select(&val, format!("{}/validation", ds.name))?,
        test: ds.select(&test, format!("{}/test", ds.name))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let ds = synth_blobs(3, 50, &[1, 4, 4], 9, 0.8).unwrap();
        let a = split_dataset(&ds, 13).unwrap();
        let b = split_dataset(&ds, 13).unwrap();
        assert_eq!(a.fit.len() + a.validation.len() + a.test.len(), ds.len());
        assert_eq!(a.fit.images().data(), b.fit.images().data());
        assert_eq!(a.test.labels(), b.test.labels());
        // Stratification: every class present in every part.
        for part in [&a.fit, &a.validation, &a.test] {
            for c in 0..3u8 {
                assert!(part.labels().contains(&c));
            }
        }
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let images = Tensor::new(vec![1, 1, 1, 2], vec![0.5, 1.5]);
        assert!(images.is_err() || LabeledDataset::new(images.unwrap(), vec![0], "bad").is_err());
    }
}
