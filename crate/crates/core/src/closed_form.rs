//! Squared-nuclear-norm matrix approximation
//!
//! ```text
//! min_A ‖X − A‖²_F + ((1−p)/p) · ‖A‖²_⋆
//! ```
//!
//! solved in closed form by shrinking the singular values of `X` with a
//! data-dependent threshold `μ`, plus an independent proximal-gradient
//! solver used to cross-check it.

use serde::{Deserialize, Serialize};

use crate::adaptive::gamma_of_p;
use crate::error::{check_open_unit, Error, Result};
use crate::matrix::DenseMatrix;
use crate::svd::svd;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrinkageSolution {
    pub a_opt: DenseMatrix,
    pub mu: f64,
    pub d_bar: usize,
    /// `max(σᵢ(X) − μ, 0)`, descending.
    pub shrunk_sigma: Vec<f64>,
    /// Singular values of `X`.
    pub sigma: Vec<f64>,
}

/// `S_μ(σ) = max(σ − μ, 0)`
#[inline]
pub fn shrinkage(sigma: f64, mu: f64) -> f64 {
    (sigma - mu).max(0.0)
}

fn check_spectrum(sigma: &[f64]) -> Result<()> {
    for (i, &s) in sigma.iter().enumerate() {
        if !(s >= 0.0) {
            return Err(Error::Parameter {
                name: "sigma",
                value: s,
                reason: "singular values must be non-negative",
            });
        }
        if i > 0 && s > sigma[i - 1] {
            return Err(Error::Unsorted { index: i });
        }
    }
    Ok(())
}

#[inline]
fn threshold_weight(p: f64, d: usize) -> f64 {
    (1.0 - p) / (p + (1.0 - p) * d as f64)
}

/// Largest `d̄` with `σ_d̄ > (1−p)/(p + (1−p)d̄) · Σ_{i≤d̄} σᵢ` (strict), or 0.
pub fn compute_d_bar(sigma: &[f64], p: f64) -> Result<usize> {
    check_open_unit("p", p)?;
    check_spectrum(sigma)?;
    let mut prefix = 0.0;
    let mut d_bar = 0;
    for (i, &s) in sigma.iter().enumerate() {
        prefix += s;
        let d = i + 1;
        if s > threshold_weight(p, d) * prefix {
            d_bar = d;
        }
    }
    Ok(d_bar)
}

/// `μ = (1−p)/(p + (1−p)d̄) · Σ_{i≤d̄} σᵢ`; 0 when `d̄ = 0`.
pub fn compute_mu(sigma: &[f64], p: f64, d_bar: usize) -> Result<f64> {
    check_open_unit("p", p)?;
    check_spectrum(sigma)?;
    if d_bar > sigma.len() {
        return Err(Error::Parameter {
            name: "d_bar",
            value: d_bar as f64,
            reason: "exceeds the number of singular values",
        });
    }
    if d_bar == 0 {
        return Ok(0.0);
    }
    let head: f64 = sigma[..d_bar].iter().sum();
    Ok(threshold_weight(p, d_bar) * head)
}

pub fn solve_closed_form(x: &DenseMatrix, p: f64) -> Result<ShrinkageSolution> {
    check_open_unit("p", p)?;
    let s = svd(x)?;
    let d_bar = compute_d_bar(&s.sigma, p)?;
    let mu = compute_mu(&s.sigma, p, d_bar)?;
    let shrunk: Vec<f64> = s.sigma.iter().map(|&v| shrinkage(v, mu)).collect();
    let a_opt = s.reconstruct_with(&shrunk);
    Ok(ShrinkageSolution {
        a_opt,
        mu,
        d_bar,
        shrunk_sigma: shrunk,
        sigma: s.sigma,
    })
}

/// `‖X − A‖²_F + ((1−p)/p) · ‖A‖²_⋆`
pub fn convex_objective(x: &DenseMatrix, a: &DenseMatrix, p: f64) -> Result<f64> {
    let gamma = gamma_of_p(p)?;
    let resid = x.sub(a)?.frobenius_norm_sq();
    let nuc: f64 = svd(a)?.sigma.iter().sum();
    Ok(resid + gamma * nuc * nuc)
}

/// Iteration cap for [`solve_convex_iterative`].
pub const MAX_PROX_ITERATIONS: usize = 10_000;

/// Proximal gradient on the convex problem, stopped once
/// `‖A_{t+1} − A_t‖_F ≤ tol`.
///
/// The quadratic part has gradient `2(A − X)` (Lipschitz constant 2); steps
/// use `η = 1/4`. The prox of `c‖·‖²_⋆` soft-thresholds the spectrum at the
/// fixed point `τ = 2c Σ max(yᵢ − τ, 0)`, located by bisection.
pub fn solve_convex_iterative(x: &DenseMatrix, p: f64, tol: f64) -> Result<DenseMatrix> {
    let gamma = gamma_of_p(p)?;
    if !(tol > 0.0) {
        return Err(Error::Parameter {
            name: "tol",
            value: tol,
            reason: "tolerance must be positive",
        });
    }
    const LIPSCHITZ: f64 = 2.0;
    let eta = 1.0 / (2.0 * LIPSCHITZ);
    let c = eta * gamma;

    let mut a = DenseMatrix::zeros(x.rows(), x.cols());
    let mut last_step = f64::INFINITY;
    for _ in 0..MAX_PROX_ITERATIONS {
        // forward step: A − η·2(A − X)
        let mut y = a.scaled(1.0 - 2.0 * eta);
        y.axpy(2.0 * eta, x)?;
        let next = prox_squared_nuclear(&y, c)?;
        last_step = next.sub(&a)?.frobenius_norm();
        a = next;
        if last_step <= tol {
            return Ok(a);
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_PROX_ITERATIONS,
        last_step,
    })
}

/// `argmin_A ½‖A − Y‖²_F + c‖A‖²_⋆`
pub fn prox_squared_nuclear(y: &DenseMatrix, c: f64) -> Result<DenseMatrix> {
    let s = svd(y)?;
    let tau = spectral_threshold(&s.sigma, c);
    let shrunk: Vec<f64> = s.sigma.iter().map(|&v| (v - tau).max(0.0)).collect();
    Ok(s.reconstruct_with(&shrunk))
}

/// Root of `τ − 2c Σ max(yᵢ − τ, 0)` on `[0, max y]`.
fn spectral_threshold(y: &[f64], c: f64) -> f64 {
    let top = y.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 0.0;
    }
    let g = |t: f64| t - 2.0 * c * y.iter().map(|&v| (v - t).max(0.0)).sum::<f64>();
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
