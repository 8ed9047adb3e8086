//! Fit-time statistics: class means, tied covariance, per-neuron spreads,
//! and the k-means bounding boxes of the Box monitor.

use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Axis-aligned bounding box over feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxRegion {
    pub lo: Vec<f32>,
    pub hi: Vec<f32>,
}

impl BoxRegion {
    /// Membership after enlarging the box by factor `gamma` about its center.
    pub fn contains(&self, z: &[f32], gamma: f64) -> bool {
        self.lo.iter().zip(&self.hi).zip(z).all(|((&lo, &hi), &v)| {
            let center = (lo as f64 + hi as f64) / 2.0;
            let half = (hi as f64 - lo as f64) / 2.0 * (1.0 + gamma);
            (v as f64) >= center - half && (v as f64) <= center + half
        })
    }
}

/// Per-class mean of feature rows grouped by `groups` (true labels or
/// predicted classes). Errors if any class in `0..class_count` is absent.
pub fn class_means(features: &[Vec<f32>], groups: &[usize], class_count: usize) -> Result<Vec<Vec<f64>>> {
    let d = features.first().map(|f| f.len()).unwrap_or(0);
    let mut sums = vec![vec![0.0f64; d]; class_count];
    let mut counts = vec![0usize; class_count];
    for (f, &g) in features.iter().zip(groups) {
        counts[g] += 1;
        for (s, &v) in sums[g].iter_mut().zip(f) {
            *s += v as f64;
        }
    }
    for (c, count) in counts.iter().enumerate() {
        if *count == 0 {
            return Err(Error::MissingClass { class: c });
        }
        for s in &mut sums[c] {
            *s /= *count as f64;
        }
    }
    Ok(sums)
}

/// Tied (pooled) population covariance: `(1/n)·Σ_c Σ_{i∈c} (zᵢ−μ_c)(zᵢ−μ_c)ᵀ`,
/// accumulated in f64, rounded to an f32 tensor at the boundary.
pub fn tied_covariance(features: &[Vec<f32>], groups: &[usize], means: &[Vec<f64>]) -> Result<Tensor> {
    let n = features.len();
    if n < 2 {
        return Err(Error::domain("n", n as f64, "≥ 2 samples"));
    }
    let d = features[0].len();
    let mut cov = vec![0.0f64; d * d];
    for (f, &g) in features.iter().zip(groups) {
        let mu = &means[g];
        for a in 0..d {
            let da = f[a] as f64 - mu[a];
            for b in 0..=a {
                cov[a * d + b] += da * (f[b] as f64 - mu[b]);
            }
        }
    }
    let mut out = vec![0.0f32; d * d];
    for a in 0..d {
        for b in 0..=a {
            let v = (cov[a * d + b] / n as f64) as f32;
            out[a * d + b] = v;
            out[b * d + a] = v;
        }
    }
    Tensor::new(vec![d, d], out)
}

/// Rows of per-class statistics, one inner vec per class.
pub type ClassMatrix = Vec<Vec<f32>>;

/// Per-class, per-coordinate mean and population standard deviation.
pub fn class_mean_std(
    features: &[Vec<f32>],
    groups: &[usize],
    class_count: usize,
) -> Result<(ClassMatrix, ClassMatrix)> {
    let means = class_means(features, groups, class_count)?;
    let d = features.first().map(|f| f.len()).unwrap_or(0);
    let mut sq = vec![vec![0.0f64; d]; class_count];
    let mut counts = vec![0usize; class_count];
    for (f, &g) in features.iter().zip(groups) {
        counts[g] += 1;
        for (j, &v) in f.iter().enumerate() {
            let dv = v as f64 - means[g][j];
            sq[g][j] += dv * dv;
        }
    }
    let mut mean_out = Vec::with_capacity(class_count);
    let mut std_out = Vec::with_capacity(class_count);
    for c in 0..class_count {
        mean_out.push(means[c].iter().map(|&v| v as f32).collect());
        std_out.push(sq[c].iter().map(|&v| ((v / counts[c] as f64).sqrt()) as f32).collect());
    }
    Ok((mean_out, std_out))
}

/// Seeded k-means with a fixed iteration count; empty clusters are re-seeded
/// from the point farthest from its current center. Returns the bounding box
/// of each non-empty cluster.
pub fn kmeans_boxes(features: &[Vec<f32>], m: usize, seed: u64, iterations: usize) -> Vec<BoxRegion> {
    if features.is_empty() || m == 0 {
        return Vec::new();
    }
    let d = features[0].len();
    let k = m.min(features.len());
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.shuffle(&mut rng);
    let mut centers: Vec<Vec<f64>> = order[..k]
        .iter()
        .map(|&i| features[i].iter().map(|&v| v as f64).collect())
        .collect();
    let mut assign = vec![0usize; features.len()];
    for _ in 0..iterations {
        for (i, f) in features.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dist: f64 = f
                    .iter()
                    .zip(center)
                    .map(|(&v, &m)| (v as f64 - m) * (v as f64 - m))
                    .sum();
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            assign[i] = best;
        }
        let mut sums = vec![vec![0.0f64; d]; k];
        let mut counts = vec![0usize; k];
        for (i, f) in features.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, &v) in sums[assign[i]].iter_mut().zip(f) {
                *s += v as f64;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed from the farthest point (first index on ties).
                let far = (0..features.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&features[a], &centers[assign[a]]);
                        let db = sq_dist(&features[b], &centers[assign[b]]);
                        da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                    })
                    .unwrap();
                centers[c] = features[far].iter().map(|&v| v as f64).collect();
            } else {
                for (j, s) in sums[c].iter().enumerate() {
                    centers[c][j] = s / counts[c] as f64;
                }
            }
        }
    }
    // Final assignment, then per-cluster bounding boxes.
    for (i, f) in features.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter().enumerate() {
            let dist = sq_dist(f, center);
            if dist < best_d {
                best_d = dist;
                best = c;
            }
        }
        assign[i] = best;
    }
    let mut boxes = Vec::new();
    for c in 0..k {
        let members: Vec<&Vec<f32>> = features
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == c)
            .map(|(f, _)| f)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut lo = members[0].clone();
        let mut hi = members[0].clone();
        for f in &members[1..] {
            for j in 0..d {
                lo[j] = lo[j].min(f[j]);
                hi[j] = hi[j].max(f[j]);
            }
        }
        boxes.push(BoxRegion { lo, hi });
    }
    boxes
}

fn sq_dist(f: &[f32], center: &[f64]) -> f64 {
    f.iter()
        .zip(center)
        .map(|(&v, &m)| (v as f64 - m) * (v as f64 - m))
        .sum()
}
