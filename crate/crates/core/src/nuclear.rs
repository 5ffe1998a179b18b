//! Nuclear norm, its variational (factored) form, and factor constructions
//! that probe it.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::objective::FactorPair;
use crate::svd::{svd, SvdResult};

/// Singular values below this fraction of σ₁ count as zero when a rank is needed.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// `‖A‖_⋆ = Σ σᵢ(A)`
pub fn nuclear_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(svd(a)?.sigma.iter().sum())
}

/// `Σ_k ‖u_k‖₂ · ‖v_k‖₂`, the quantity whose infimum over exact
/// factorizations is the nuclear norm.
pub fn column_norm_product_sum(f: &FactorPair) -> f64 {
    f.u.column_norms_sq()
        .iter()
        .zip(f.v.column_norms_sq())
        .map(|(a, b)| (a * b).sqrt())
        .sum()
}

/// Balanced factors `U = L·diag(√σ)`, `V = R·diag(√σ)`, which attain the
/// nuclear norm in the variational form.
pub fn variational_factorization(a: &DenseMatrix) -> Result<FactorPair> {
    let s = svd(a)?;
    Ok(balanced_factors(&s))
}

pub fn balanced_factors(s: &SvdResult) -> FactorPair {
    let root: Vec<f64> = s.sigma.iter().map(|v| v.sqrt()).collect();
    FactorPair {
        u: s.left.scale_columns(&root),
        v: s.right.scale_columns(&root),
    }
}

/// `(√2/2·[U, U], √2/2·[V, V])`: same product, width doubled, Ω halved.
pub fn pathological_double(f: &FactorPair) -> FactorPair {
    let u = f.u.hstack(&f.u).expect("same rows").scaled(FRAC_1_SQRT_2);
    let v = f.v.hstack(&f.v).expect("same rows").scaled(FRAC_1_SQRT_2);
    FactorPair { u, v }
}

/// Exact factorization of `A` into `d ≥ rank(A)` columns whose norm
/// products `‖u_k‖‖v_k‖` all equal `‖A‖_⋆ / d`.
///
/// Starts from the balanced SVD factors padded with zero columns and applies
/// `d − 1` plane rotations to the shared right factor, each one pinning one
/// diagonal entry of the Gram matrix `diag(σ, 0)` to its mean.
pub fn equal_spread_factorization(a: &DenseMatrix, d: usize) -> Result<FactorPair> {
    let s = svd(a)?;
    let top = s.sigma.first().copied().unwrap_or(0.0);
    let r = s
        .sigma
        .iter()
        .filter(|&&v| v > RANK_TOLERANCE * top && v > 0.0)
        .count();
    if d == 0 || d < r {
        return Err(Error::Parameter {
            name: "d",
            value: d as f64,
            reason: "factor width must be at least the numerical rank",
        });
    }
    let (m, n) = a.shape();
    if r == 0 {
        return Ok(FactorPair {
            u: DenseMatrix::zeros(m, d),
            v: DenseMatrix::zeros(n, d),
        });
    }

    let mut gram = DenseMatrix::zeros(d, d);
    for i in 0..r {
        gram.set(i, i, s.sigma[i]);
    }
    let target: f64 = s.sigma[..r].iter().sum::<f64>() / d as f64;
    let mut rot = DenseMatrix::identity(d);
    let mut active: Vec<usize> = (0..d).collect();

    while active.len() > 1 {
        let (hi_pos, &hi) = active
            .iter()
            .enumerate()
            .max_by(|x, y| gram.get(*x.1, *x.1).total_cmp(&gram.get(*y.1, *y.1)))
            .expect("non-empty");
        let lo = *active
            .iter()
            .min_by(|x, y| gram.get(**x, **x).total_cmp(&gram.get(**y, **y)))
            .expect("non-empty");
        let (ga, gb, gc) = (gram.get(hi, hi), gram.get(lo, lo), gram.get(hi, lo));
        if ga - target <= 1e-15 * target || hi == lo {
            break;
        }
        // New (hi, hi) entry: (a+b)/2 + ρ·cos(2φ + ψ); solve for the target.
        let half = 0.5 * (ga - gb);
        let rho = half.hypot(gc);
        let psi = gc.atan2(half);
        let cos_arg = ((target - 0.5 * (ga + gb)) / rho).clamp(-1.0, 1.0);
        let phi = 0.5 * (cos_arg.acos() - psi);
        let (sn, cs) = phi.sin_cos();
        apply_rotation(&mut gram, &mut rot, hi, lo, cs, sn);
        gram.set(hi, hi, target);
        active.swap_remove(hi_pos);
    }

    // B = [diag(√σ_r), 0] (r×d); factors are L_r·B·Q and R_r·B·Q.
    let root: Vec<f64> = s.sigma[..r].iter().map(|v| v.sqrt()).collect();
    let bq = DenseMatrix::from_fn(r, d, |i, j| root[i] * rot.get(i, j));
    let lr = s.left.leading_columns(r);
    let rr = s.right.leading_columns(r);
    Ok(FactorPair {
        u: lr.matmul(&bq)?,
        v: rr.matmul(&bq)?,
    })
}

/// `G ← JᵀGJ`, `Q ← QJ` for the plane rotation `J` acting on coordinates
/// `(i, j)` with `J_ii = J_jj = c`, `J_ij = s`, `J_ji = −s`.
fn apply_rotation(g: &mut DenseMatrix, q: &mut DenseMatrix, i: usize, j: usize, c: f64, s: f64) {
    let d = g.rows();
    for row in 0..d {
        let (gi, gj) = (g.get(row, i), g.get(row, j));
        g.set(row, i, c * gi - s * gj);
        g.set(row, j, s * gi + c * gj);
        let (qi, qj) = (q.get(row, i), q.get(row, j));
        q.set(row, i, c * qi - s * qj);
        q.set(row, j, s * qi + c * qj);
    }
    for col in 0..d {
        let (gi, gj) = (g.get(i, col), g.get(j, col));
        g.set(i, col, c * gi - s * gj);
        g.set(j, col, s * gi + c * gj);
    }
}
