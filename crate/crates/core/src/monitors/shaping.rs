//! Activation shaping: ASH pruning variants and ReAct clamping.

use crate::error::{Error, Result};

/// ASH pruning modes applied to a single penultimate activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AshMode {
    /// Zero entries below the per-sample percentile, keep the rest.
    Prune,
    /// As `Prune`, then set every kept entry to (sum before)/(count kept).
    Binarize,
    /// As `Prune`, then scale kept entries by `exp(s₁/s₂)` with s₁ the sum
    /// before and s₂ the sum after pruning.
    Scale,
}

/// Linear-interpolation percentile of unsorted data, `p` in [0, 100].
pub fn percentile(values: &[f32], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile of empty slice".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::domain("percentile", p, "[0, 100]"));
    }
    let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 < sorted.len() {
        Ok(sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac)
    } else {
        Ok(sorted[lo])
    }
}

/// Shape one activation vector with an ASH mode at the given percentile.
pub fn shape_activations(z: &[f32], mode: AshMode, pct: f64) -> Result<Vec<f32>> {
    let threshold = percentile(z, pct)?;
    let kept: Vec<bool> = z.iter().map(|&v| v as f64 >= threshold).collect();
    let sum_before: f64 = z.iter().map(|&v| v as f64).sum();
    match mode {
        AshMode::Prune => Ok(z
            .iter()
            .zip(&kept)
            .map(|(&v, &k)| if k { v } else { 0.0 })
            .collect()),
        AshMode::Binarize => {
            let count = kept.iter().filter(|&&k| k).count();
            let fill = if count == 0 { 0.0 } else { (sum_before / count as f64) as f32 };
            Ok(kept.iter().map(|&k| if k { fill } else { 0.0 }).collect())
        }
        AshMode::Scale => {
            let sum_after: f64 = z
                .iter()
                .zip(&kept)
                .filter(|(_, &k)| k)
                .map(|(&v, _)| v as f64)
                .sum();
            if sum_after == 0.0 {
                return Err(Error::Degenerate("ash_s: pruned sum is zero".into()));
            }
            let factor = (sum_before / sum_after).exp();
            if !factor.is_finite() {
                return Err(Error::Degenerate(format!(
                    "ash_s: scale factor exp({sum_before}/{sum_after}) is not finite"
                )));
            }
            Ok(z
                .iter()
                .zip(&kept)
                .map(|(&v, &k)| if k { (v as f64 * factor) as f32 } else { 0.0 })
                .collect())
        }
    }
}

/// ReAct rectification: clamp every entry at `c` (the fit-set percentile).
pub fn react_clamp(z: &[f32], c: f64) -> Vec<f32> {
    z.iter().map(|&v| if (v as f64) > c { c as f32 } else { v }).collect()
}
