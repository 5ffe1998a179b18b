//! Thin singular value decomposition.
//!
//! Golub–Kahan bidiagonalisation with implicit-shift QR, provided by
//! `nalgebra`, followed by descending sort and a deterministic sign fix:
//! the first non-negligible entry of every left singular vector is made
//! non-negative (the matching right vector is flipped with it).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// `X = L · diag(sigma) · Rᵀ` with `k = min(m, n)` columns in `L` and `R`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdResult {
    pub left: DenseMatrix,
    pub sigma: Vec<f64>,
    pub right: DenseMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `L · diag(values) · Rᵀ` for an arbitrary replacement spectrum.
    pub fn reconstruct_with(&self, values: &[f64]) -> DenseMatrix {
        debug_assert_eq!(values.len(), self.sigma.len());
        let keep: Vec<usize> = (0..values.len()).filter(|&i| values[i] != 0.0).collect();
        let l = self.left.select_columns(&keep);
        let r = self.right.select_columns(&keep);
        let w: Vec<f64> = keep.iter().map(|&i| values[i]).collect();
        l.scale_columns(&w)
            .matmul_nt(&r)
            .expect("factor shapes agree by construction")
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_with(&self.sigma)
    }

    /// Number of singular values strictly above `rel_cutoff · σ₁`.
    pub fn numerical_rank(&self, rel_cutoff: f64) -> usize {
        numerical_rank(&self.sigma, rel_cutoff)
    }
}

pub fn numerical_rank(sigma: &[f64], rel_cutoff: f64) -> usize {
    let top = sigma.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > rel_cutoff * top).count()
}

const SIGN_EPS: f64 = 1e-12;

pub fn svd(a: &DenseMatrix) -> Result<SvdResult> {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Err(Error::Parameter {
            name: "min(rows, cols)",
            value: 0.0,
            reason: "matrix must have at least one row and one column",
        });
    }
    let max_iter = 200 * k.max(10);
    let scale = a.data().iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    // With a convergence tolerance of one ulp nalgebra can return a factorization
    // that does not reproduce the input, so every result is checked and the
    // tolerance loosened on failure.
    for factor in [5.0, 50.0, 500.0] {
        let dm = DMatrix::from_row_slice(m, n, a.data());
        let dec = nalgebra::linalg::SVD::try_new(dm, true, true, factor * f64::EPSILON, max_iter)
            .ok_or(Error::SvdNonConvergence { iterations: max_iter })?;
        let out = sorted_result(dec, m, n, k);
        if out.reconstruct().max_abs_diff(a) <= RECONSTRUCTION_TOL * scale * (k as f64) {
            return Ok(out);
        }
    }
    Err(Error::SvdNonConvergence { iterations: max_iter })
}

const RECONSTRUCTION_TOL: f64 = 1e-10;

fn sorted_result(dec: nalgebra::linalg::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>, m: usize, n: usize, k: usize) -> SvdResult {
    let u = dec.u.expect("requested U");
    let v_t = dec.v_t.expect("requested Vᵀ");
    let s = dec.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));

    let mut left = DenseMatrix::zeros(m, k);
    let mut right = DenseMatrix::zeros(n, k);
    let mut sigma = Vec::with_capacity(k);
    for (col, &src) in order.iter().enumerate() {
        let lcol: Vec<f64> = (0..m).map(|i| u[(i, src)]).collect();
        let sign = lcol
            .iter()
            .find(|v| v.abs() > SIGN_EPS)
            .map_or(1.0, |v| v.signum());
        for i in 0..m {
            left.set(i, col, sign * lcol[i]);
        }
        for j in 0..n {
            right.set(j, col, sign * v_t[(src, j)]);
        }
        sigma.push(s[src].max(0.0));
    }
    SvdResult { left, sigma, right }
}

/// Largest singular value by power iteration on `AᵀA`; cheap enough for
/// step-size heuristics on large matrices.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return 0.0;
    }
    // Deterministic start with no special alignment to coordinate axes.
    let mut v: Vec<f64> = (0..n).map(|j| 1.0 + ((j as f64 + 1.0) * 0.618_033_988_75).fract()).collect();
    let mut estimate = 0.0;
    for _ in 0..500 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let av: Vec<f64> = (0..m)
            .map(|i| a.row(i).iter().zip(&v).map(|(x, y)| x * y).sum())
            .collect();
        let next = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut w = vec![0.0; n];
        for (i, &s) in av.iter().enumerate() {
            for (wj, aij) in w.iter_mut().zip(a.row(i)) {
                *wj += aij * s;
            }
        }
        v = w;
        if (next - estimate).abs() <= 1e-12 * next {
            return next;
        }
        estimate = next;
    }
    estimate
}
