//! The dropout matrix-factorization objective in its stochastic form, its
//! exact expectation, and the deterministic closed form
//! `‖X − UVᵀ‖²_F + ((1−θ)/θ) · Σ_k ‖u_k‖²‖v_k‖²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::theta_of_d;
use crate::error::{check_open_unit, shape_err, Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{sample_bernoulli_vector, RngState};

/// Largest factor width for which all `2^d` masks are enumerated.
pub const MAX_ENUMERATION_D: usize = 20;

/// A factorization `U · Vᵀ` with `U: m×d` and `V: n×d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    pub u: DenseMatrix,
    pub v: DenseMatrix,
}

impl FactorPair {
    pub fn new(u: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        if u.cols() != v.cols() {
            return Err(shape_err(
                "FactorPair::new",
                format!("V with {} columns", u.cols()),
                format!("{} columns", v.cols()),
            ));
        }
        Ok(Self { u, v })
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.u.cols()
    }

    pub fn product(&self) -> DenseMatrix {
        self.u.matmul_nt(&self.v).expect("U and V share d")
    }

    /// Checks `U: m×d`, `V: n×d` against a target of shape `m×n`.
    pub fn check_target(&self, x: &DenseMatrix, op: &'static str) -> Result<()> {
        if self.u.rows() != x.rows() || self.v.rows() != x.cols() {
            return Err(shape_err(
                op,
                format!("U with {} rows and V with {} rows", x.rows(), x.cols()),
                format!("U {}x{}, V {}x{}", self.u.rows(), self.d(), self.v.rows(), self.d()),
            ));
        }
        Ok(())
    }

    /// Permutes the columns of both factors.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        Self {
            u: self.u.select_columns(perm),
            v: self.v.select_columns(perm),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.find_non_finite().is_none() && self.v.find_non_finite().is_none()
    }
}

/// Retain-probability policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DropoutConfig {
    /// Constant retain probability θ.
    Fixed { theta: f64 },
    /// θ(d) = p / (d − (d−1)p), shrinking with the factor width.
    Adaptive { p: f64 },
}

impl DropoutConfig {
    pub fn fixed(theta: f64) -> Result<Self> {
        check_open_unit("theta", theta)?;
        Ok(Self::Fixed { theta })
    }

    pub fn adaptive(p: f64) -> Result<Self> {
        check_open_unit("p", p)?;
        Ok(Self::Adaptive { p })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fixed { theta } => check_open_unit("theta", theta),
            Self::Adaptive { p } => check_open_unit("p", p),
        }
    }

    /// Retain probability used for a factorization of width `d`.
    pub fn theta_for(&self, d: usize) -> Result<f64> {
        match *self {
            Self::Fixed { theta } => {
                check_open_unit("theta", theta)?;
                Ok(theta)
            }
            Self::Adaptive { p } => theta_of_d(p, d),
        }
    }
}

/// `Σ_k ‖u_k‖² · ‖v_k‖²`
pub fn omega_dropout(f: &FactorPair) -> f64 {
    f.u.column_norms_sq()
        .iter()
        .zip(f.v.column_norms_sq())
        .map(|(a, b)| a * b)
        .sum()
}

/// `‖X − UVᵀ‖²_F`
pub fn residual_norm_sq(x: &DenseMatrix, f: &FactorPair) -> Result<f64> {
    f.check_target(x, "residual_norm_sq")?;
    Ok(x.sub(&f.product())?.frobenius_norm_sq())
}

/// `(1−θ)/θ`, the penalty weight on Ω that dropout induces.
#[inline]
pub fn dropout_penalty_weight(theta: f64) -> f64 {
    (1.0 - theta) / theta
}

/// `‖X − UVᵀ‖²_F + ((1−θ)/θ) · Ω(U, V)`
pub fn deterministic_objective(x: &DenseMatrix, f: &FactorPair, theta: f64) -> Result<f64> {
    check_open_unit("theta", theta)?;
    penalized_objective(x, f, dropout_penalty_weight(theta))
}

/// `‖X − UVᵀ‖²_F + λ · Ω(U, V)` for an explicit weight `λ ≥ 0`.
pub fn penalized_objective(x: &DenseMatrix, f: &FactorPair, lambda: f64) -> Result<f64> {
    Ok(residual_norm_sq(x, f)? + lambda * omega_dropout(f))
}

fn check_mask(f: &FactorPair, mask: &[bool], op: &'static str) -> Result<()> {
    if mask.len() != f.d() {
        return Err(shape_err(op, format!("mask of length {}", f.d()), format!("{}", mask.len())));
    }
    Ok(())
}

pub(crate) fn kept_columns(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &r)| r).map(|(k, _)| k).collect()
}

/// `X − (1/θ) · U diag(r) Vᵀ`
pub(crate) fn masked_residual(x: &DenseMatrix, f: &FactorPair, theta: f64, kept: &[usize]) -> DenseMatrix {
    if kept.is_empty() {
        return x.clone();
    }
    let uk = f.u.select_columns(kept);
    let vk = f.v.select_columns(kept);
    let mut r = x.clone();
    let p = uk.matmul_nt(&vk).expect("shapes checked by caller");
    r.axpy(-1.0 / theta, &p).expect("shapes checked by caller");
    r
}

/// `‖X − (1/θ) · U diag(r) Vᵀ‖²_F` for one dropout mask `r`.
pub fn sampled_objective(x: &DenseMatrix, f: &FactorPair, theta: f64, mask: &[bool]) -> Result<f64> {
    check_open_unit("theta", theta)?;
    f.check_target(x, "sampled_objective")?;
    check_mask(f, mask, "sampled_objective")?;
    Ok(masked_residual(x, f, theta, &kept_columns(mask)).frobenius_norm_sq())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// `E_r ‖X − (1/θ) U diag(r) Vᵀ‖²_F` by enumerating all `2^d` masks.
///
/// Mask probabilities `θ^{|r|}(1−θ)^{d−|r|}` are formed in log space, and the
/// weighted terms are reduced in fixed-size chunks with compensated
/// summation, so the result does not depend on the thread count.
pub fn exact_expected_objective(x: &DenseMatrix, f: &FactorPair, theta: f64) -> Result<f64> {
    check_open_unit("theta", theta)?;
    f.check_target(x, "exact_expected_objective")?;
    let d = f.d();
    if d > MAX_ENUMERATION_D {
        return Err(Error::Capacity {
            d,
            max: MAX_ENUMERATION_D,
        });
    }
    let (ln_keep, ln_drop) = (theta.ln(), (1.0 - theta).ln());
    let total: u64 = 1 << d;
    const CHUNK: u64 = 256;
    let n_chunks = total.div_ceil(CHUNK);

    let partials: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = CompensatedSum::default();
            let mut mask = vec![false; d];
            for bits in c * CHUNK..((c + 1) * CHUNK).min(total) {
                for (k, slot) in mask.iter_mut().enumerate() {
                    *slot = bits >> k & 1 == 1;
                }
                let ones = bits.count_ones() as f64;
                let w = (ones * ln_keep + (d as f64 - ones) * ln_drop).exp();
                let kept = kept_columns(&mask);
                acc.add(w * masked_residual(x, f, theta, &kept).frobenius_norm_sq());
            }
            acc.value()
        })
        .collect();

    let mut acc = CompensatedSum::default();
    partials.into_iter().for_each(|p| acc.add(p));
    Ok(acc.value())
}

/// Sample mean and standard error of the stochastic objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
}

pub fn monte_carlo_objective(
    x: &DenseMatrix,
    f: &FactorPair,
    theta: f64,
    n_samples: usize,
    rng: &mut RngState,
) -> Result<MonteCarloEstimate> {
    check_open_unit("theta", theta)?;
    f.check_target(x, "monte_carlo_objective")?;
    if n_samples < 2 {
        return Err(Error::Parameter {
            name: "n_samples",
            value: n_samples as f64,
            reason: "need at least two samples for a standard error",
        });
    }
    // Welford
    let (mut mean, mut m2) = (0.0, 0.0);
    for i in 0..n_samples {
        let mask = sample_bernoulli_vector(f.d(), theta, rng)?;
        let v = masked_residual(x, f, theta, &kept_columns(&mask)).frobenius_norm_sq();
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = m2 / (n_samples - 1) as f64;
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / n_samples as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_instance(rng: &mut RngState, m: usize, n: usize, d: usize) -> (DenseMatrix, FactorPair) {
        let x = rng.gaussian_matrix(m, n, 1.0);
        let f = FactorPair::new(rng.gaussian_matrix(m, d, 0.7), rng.gaussian_matrix(n, d, 0.7)).unwrap();
        (x, f)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    /// Independent entrywise route: for each (i, j) the entry is a sum of
    /// independent scaled Bernoullis, so its second moment is mean² + variance.
    fn entrywise_expectation(x: &DenseMatrix, f: &FactorPair, theta: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let mut mean = x.get(i, j);
                let mut var = 0.0;
                for k in 0..f.d() {
                    let c = f.u.get(i, k) * f.v.get(j, k) / theta;
                    mean -= theta * c;
                    var += c * c * theta * (1.0 - theta);
                }
                total += mean * mean + var;
            }
        }
        total
    }

    #[test]
    fn omega_examples() {
        let z = FactorPair::new(DenseMatrix::zeros(3, 4), DenseMatrix::zeros(2, 4)).unwrap();
        assert_eq!(omega_dropout(&z), 0.0);
        let u = DenseMatrix::new(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let v = DenseMatrix::new(2, 1, vec![1.0, 0.0]).unwrap();
        assert_eq!(omega_dropout(&FactorPair::new(u, v).unwrap()), 1.0);
    }

    #[test]
    fn omega_homogeneity_and_permutation() {
        let mut rng = RngState::new(1);
        let (x, f) = random_instance(&mut rng, 5, 4, 3);
        let c = 1.7;
        let scaled = FactorPair::new(f.u.scaled(c), f.v.clone()).unwrap();
        assert!(rel(omega_dropout(&scaled), c * c * omega_dropout(&f)) < 1e-13);
        let p = f.permute_columns(&[2, 0, 1]);
        assert!(rel(omega_dropout(&p), omega_dropout(&f)) < 1e-14);
        let a = deterministic_objective(&x, &f, 0.4).unwrap();
        let b = deterministic_objective(&x, &p, 0.4).unwrap();
        assert!(rel(a, b) < 1e-13);
    }

    #[test]
    fn deterministic_zero_residual() {
        let mut rng = RngState::new(2);
        let f = FactorPair::new(rng.gaussian_matrix(4, 2, 1.0), rng.gaussian_matrix(3, 2, 1.0)).unwrap();
        let x = f.product();
        for theta in [0.2, 0.5, 0.8] {
            let v = deterministic_objective(&x, &f, theta).unwrap();
            let expect = (1.0 - theta) / theta * omega_dropout(&f);
            assert!(rel(v, expect) < 1e-12);
        }
        assert_eq!(dropout_penalty_weight(0.5), 1.0);
    }

    #[test]
    fn deterministic_rejects_shapes_and_theta() {
        let mut rng = RngState::new(3);
        let (x, f) = random_instance(&mut rng, 4, 4, 2);
        assert!(deterministic_objective(&x.transpose().leading_columns(3), &f, 0.5).is_err());
        assert!(deterministic_objective(&x, &f, 1.0).is_err());
    }

    #[test]
    fn sampled_extreme_masks() {
        let mut rng = RngState::new(4);
        let (x, f) = random_instance(&mut rng, 4, 3, 3);
        let zero = sampled_objective(&x, &f, 0.3, &[false; 3]).unwrap();
        assert!(rel(zero, x.frobenius_norm_sq()) < 1e-15);
        let ones = sampled_objective(&x, &f, 0.999, &[true; 3]).unwrap();
        let plain = residual_norm_sq(&x, &f).unwrap();
        assert!(rel(ones, plain) < 0.01);
        assert!(sampled_objective(&x, &f, 0.5, &[true; 2]).is_err());
    }

    #[test]
    fn d1_two_term_average_matches_deterministic() {
        let mut rng = RngState::new(5);
        let (x, f) = random_instance(&mut rng, 3, 4, 1);
        let avg = 0.5 * sampled_objective(&x, &f, 0.5, &[false]).unwrap()
            + 0.5 * sampled_objective(&x, &f, 0.5, &[true]).unwrap();
        assert!(rel(avg, deterministic_objective(&x, &f, 0.5).unwrap()) < 1e-13);
        assert!(rel(exact_expected_objective(&x, &f, 0.5).unwrap(), avg) < 1e-13);
    }

    #[test]
    fn exact_matches_deterministic_and_entrywise_oracle() {
        let mut rng = RngState::new(6);
        let (x, f) = random_instance(&mut rng, 6, 5, 10);
        for theta in [0.1, 0.3, 0.9] {
            let exact = exact_expected_objective(&x, &f, theta).unwrap();
            let det = deterministic_objective(&x, &f, theta).unwrap();
            let oracle = entrywise_expectation(&x, &f, theta);
            assert!(rel(exact, det) <= 1e-10, "theta {theta}: {exact} vs {det}");
            assert!(rel(oracle, det) <= 1e-12);
        }
    }

    #[test]
    fn exact_with_zero_data() {
        let mut rng = RngState::new(7);
        let (x, f) = random_instance(&mut rng, 4, 4, 4);
        let z = DenseMatrix::zeros(x.rows(), x.cols());
        let exact = exact_expected_objective(&z, &f, 0.3).unwrap();
        assert!(rel(exact, deterministic_objective(&z, &f, 0.3).unwrap()) < 1e-12);
    }

    #[test]
    fn exact_capacity_error() {
        let mut rng = RngState::new(8);
        let (x, f) = random_instance(&mut rng, 2, 2, 21);
        assert!(matches!(
            exact_expected_objective(&x, &f, 0.5),
            Err(Error::Capacity { d: 21, max: 20 })
        ));
    }

    #[test]
    fn monte_carlo_clt_band_and_determinism() {
        let mut rng = RngState::new(9);
        let (x, f) = random_instance(&mut rng, 4, 3, 3);
        let det = deterministic_objective(&x, &f, 0.6).unwrap();
        let a = monte_carlo_objective(&x, &f, 0.6, 50_000, &mut RngState::new(10)).unwrap();
        let b = monte_carlo_objective(&x, &f, 0.6, 50_000, &mut RngState::new(10)).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        assert!((a.mean - det).abs() <= 4.0 * a.std_error);
        assert!(monte_carlo_objective(&x, &f, 0.6, 1, &mut rng).is_err());
    }

    #[test]
    fn monte_carlo_dominant_mask() {
        let mut rng = RngState::new(11);
        let (x, f) = random_instance(&mut rng, 4, 3, 2);
        let est = monte_carlo_objective(&x, &f, 0.999, 20_000, &mut rng).unwrap();
        let ones = sampled_objective(&x, &f, 0.999, &[true, true]).unwrap();
        assert!(rel(est.mean, ones) < 0.02);
    }

    #[test]
    fn dropout_config_modes() {
        assert!(DropoutConfig::fixed(0.0).is_err());
        assert!(DropoutConfig::adaptive(1.0).is_err());
        let a = DropoutConfig::adaptive(0.9).unwrap();
        assert!((a.theta_for(10).unwrap() - 0.9 / 1.9).abs() < 1e-15);
        assert_eq!(DropoutConfig::fixed(0.3).unwrap().theta_for(50).unwrap(), 0.3);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"{"mode":"adaptive","p":0.9}"#);
    }
}
