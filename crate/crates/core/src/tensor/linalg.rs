//! Covariance, Cholesky, and Jacobi eigendecomposition.
//!
//! All three accumulate in f64 regardless of tensor storage: empirical
//! covariance amplifies small input differences, so the 32-bit carrier is
//! widened here and rounded back only at the tensor boundary. Reduction
//! order is a fixed sequential sweep, never data-dependent.

use super::Tensor;
use crate::error::{Error, Result};

/// Cholesky factor (f64 lower triangle) of a symmetric positive-definite
/// matrix, possibly ridged. `L·Lᵀ` reconstructs the ridged input.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    dim: usize,
    /// Row-major `dim×dim`; entries above the diagonal are zero.
    lower: Vec<f64>,
}

impl SpdFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Identity factor (for tests and the forced-identity MDS check).
    pub fn identity(dim: usize) -> Self {
        let mut lower = vec![0.0; dim * dim];
        for i in 0..dim {
            lower[i * dim + i] = 1.0;
        }
        SpdFactor { dim, lower }
    }

    pub fn from_lower(dim: usize, lower: Vec<f64>) -> Result<Self> {
        if lower.len() != dim * dim {
            return Err(Error::shape("SpdFactor", format!("{}", dim * dim), format!("{}", lower.len())));
        }
        Ok(SpdFactor { dim, lower })
    }

    /// Solve `(L·Lᵀ)x = b` in f64 via two triangular solves.
    pub fn solve_f64(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        debug_assert_eq!(b.len(), d);
        let mut y = vec![0.0f64; d];
        for i in 0..d {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.lower[i * d + j] * y[j];
            }
            y[i] = acc / self.lower[i * d + i];
        }
        let mut x = vec![0.0f64; d];
        for i in (0..d).rev() {
            let mut acc = y[i];
            for j in i + 1..d {
                acc -= self.lower[j * d + i] * x[j];
            }
            x[i] = acc / self.lower[i * d + i];
        }
        x
    }

    /// Squared Mahalanobis form `diffᵀ (L·Lᵀ)⁻¹ diff = ‖L⁻¹ diff‖²`,
    /// via one forward substitution.
    pub fn mahalanobis_sq(&self, diff: &[f64]) -> f64 {
        let d = self.dim;
        debug_assert_eq!(diff.len(), d);
        let mut y = vec![0.0f64; d];
        let mut acc_sq = 0.0f64;
        for i in 0..d {
            let mut acc = diff[i];
            for j in 0..i {
                acc -= self.lower[i * d + j] * y[j];
            }
            y[i] = acc / self.lower[i * d + i];
            acc_sq += y[i] * y[i];
        }
        acc_sq
    }
}

/// Population covariance `(1/n)·Σ (xᵢ−μ)(xᵢ−μ)ᵀ` of the rows of an `n×d`
/// tensor, accumulated in f64 with a fixed sequential order.
pub fn covariance(rows: &Tensor) -> Result<Tensor> {
    if rows.shape().len() != 2 {
        return Err(Error::shape("covariance", "n×d", format!("{:?}", rows.shape())));
    }
    let (n, d) = (rows.shape()[0], rows.shape()[1]);
    if n < 2 {
        return Err(Error::domain("n", n as f64, "≥ 2 rows"));
    }
    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        let row = rows.row(i);
        for j in 0..d {
            mean[j] += row[j] as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    // Lower triangle only, mirrored afterwards: the output is exactly
    // symmetric even after rounding to f32.
    let mut cov = vec![0.0f64; d * d];
    for i in 0..n {
        let row = rows.row(i);
        for a in 0..d {
            let da = row[a] as f64 - mean[a];
            for b in 0..=a {
                cov[a * d + b] += da * (row[b] as f64 - mean[b]);
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

const RIDGE_LADDER: [f64; 4] = [1e-8, 1e-6, 1e-4, 1e-2];

/// Cholesky factorization of `m + ridge·I`.
///
/// If the requested ridge fails, larger rungs of a fixed ladder
/// (`{1e-8, 1e-6, 1e-4, 1e-2} × mean diagonal`) are tried in order;
/// the first success wins. Near-singular tied covariances on small fit
/// sets are the expected caller.
pub fn cholesky_spd(m: &Tensor, ridge: f64) -> Result<SpdFactor> {
    if m.shape().len() != 2 || m.shape()[0] != m.shape()[1] {
        return Err(Error::shape("cholesky_spd", "square d×d", format!("{:?}", m.shape())));
    }
    let d = m.shape()[0];
    if d == 0 {
        return Err(Error::EmptyInput("cholesky of 0×0 matrix".into()));
    }
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(Error::domain("ridge", ridge, "finite, ≥ 0"));
    }
    let a: Vec<f64> = m.data().iter().map(|&v| v as f64).collect();
    let mut mean_diag = (0..d).map(|i| a[i * d + i].abs()).sum::<f64>() / d as f64;
    if mean_diag <= 0.0 {
        mean_diag = 1.0;
    }
    let mut candidates = vec![ridge];
    for scale in RIDGE_LADDER {
        let r = scale * mean_diag;
        if r > ridge {
            candidates.push(r);
        }
    }
    for r in candidates {
        if let Some(lower) = try_cholesky(&a, d, r) {
            return Ok(SpdFactor { dim: d, lower });
        }
    }
    Err(Error::NotSpd)
}

fn try_cholesky(a: &[f64], d: usize, ridge: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0f64; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut acc = a[i * d + j];
            if i == j {
                acc += ridge;
            }
            for k in 0..j {
                acc -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if acc <= 0.0 || !acc.is_finite() {
                    return None;
                }
                l[i * d + i] = acc.sqrt();
            } else {
                l[i * d + j] = acc / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Solve `(m + ridge·I)x = b` from a prepared factor, rounding to f32 at
/// the tensor boundary. `SpdFactor::solve_f64` keeps full precision.
pub fn solve_spd(f: &SpdFactor, b: &Tensor) -> Result<Tensor> {
    if b.shape().len() != 1 || b.shape()[0] != f.dim {
        return Err(Error::shape("solve_spd", format!("vector of dim {}", f.dim), format!("{:?}", b.shape())));
    }
    let b64: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    let x = f.solve_f64(&b64);
    Tensor::new(vec![f.dim], x.iter().map(|&v| v as f32).collect())
}

/// Orthonormal eigenvectors of the `count` largest eigenvalues of a
/// symmetric matrix, as rows of a `count×d` tensor.
///
/// Cyclic Jacobi sweeps in f64 (off-diagonal Frobenius tolerance 1e-12,
/// at most 100 sweeps). Each vector's sign is fixed so its first nonzero
/// component is positive.
pub fn top_eigenvectors(m: &Tensor, count: usize) -> Result<Tensor> {
    let (_vals, vecs, d) = top_eigenvectors_f64(m, count)?;
    let mut out = vec![0.0f32; count * d];
    for (r, v) in vecs.iter().enumerate() {
        for (c, &x) in v.iter().enumerate() {
            out[r * d + c] = x as f32;
        }
    }
    Tensor::new(vec![count, d], out)
}

/// f64 variant of [`top_eigenvectors`]; returns (eigenvalues, row vectors, d).
pub fn top_eigenvectors_f64(m: &Tensor, count: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    if m.shape().len() != 2 || m.shape()[0] != m.shape()[1] {
        return Err(Error::shape("top_eigenvectors", "square d×d", format!("{:?}", m.shape())));
    }
    let d = m.shape()[0];
    if count == 0 || count > d {
        return Err(Error::domain("count", count as f64, format!("1..={d}")));
    }
    let a: Vec<f64> = m.data().iter().map(|&v| v as f64).collect();
    let (vals, vecs) = jacobi_eigen(&a, d);
    // Sort by descending eigenvalue; ties keep ascending original index.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).unwrap().then(i.cmp(&j)));
    let mut out_vals = Vec::with_capacity(count);
    let mut out_vecs = Vec::with_capacity(count);
    for &idx in order.iter().take(count) {
        let mut v: Vec<f64> = (0..d).map(|r| vecs[r * d + idx]).collect();
        if let Some(first) = v.iter().find(|x| **x != 0.0) {
            if *first < 0.0 {
                for x in &mut v {
                    *x = -*x;
                }
            }
        }
        out_vals.push(vals[idx]);
        out_vecs.push(v);
    }
    Ok((out_vals, out_vecs, d))
}

/// Cyclic Jacobi on a symmetric matrix; returns (eigenvalues, column eigenvectors).
fn jacobi_eigen(a_in: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a_in.to_vec();
    let mut v = vec![0.0f64; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in p + 1..d {
                off += a[p * d + q] * a[p * d + q];
            }
        }
        if (2.0 * off).sqrt() <= 1e-12 * frob {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * d + p];
                let aqq = a[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals: Vec<f64> = (0..d).map(|i| a[i * d + i]).collect();
    (vals, v)
}
