use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::RngState;

/// `X = U₀V₀ᵀ + Z₀` with Gaussian factors of width `true_rank` and Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub true_rank: usize,
    pub signal_std: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 100×100, rank 10, signal 0.1, noise 0.01.
    pub fn low_rank_plus_noise(seed: u64) -> Self {
        Self {
            m: 100,
            n: 100,
            true_rank: 10,
            signal_std: 0.1,
            noise_std: 0.01,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value: f64, reason| Err(Error::Parameter { name, value, reason });
        if self.m == 0 || self.n == 0 {
            return bad("m, n", 0.0, "dimensions must be positive");
        }
        if self.true_rank == 0 || self.true_rank > self.m.min(self.n) {
            return bad("true_rank", self.true_rank as f64, "must lie in 1..=min(m, n)");
        }
        if !(self.signal_std > 0.0 && self.signal_std.is_finite()) {
            return bad("signal_std", self.signal_std, "must be positive");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std", self.noise_std, "must be non-negative");
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    let mut rng = RngState::new(spec.seed);
    let mut x = factor_product(spec.m, spec.n, spec.true_rank, spec.signal_std, &mut rng);
    if spec.noise_std > 0.0 {
        let z = rng.gaussian_matrix(spec.m, spec.n, spec.noise_std);
        x.axpy(1.0, &z)?;
    }
    Ok(x)
}

/// `U₀V₀ᵀ` with `U₀: m×inner`, `V₀: n×inner`, entries N(0, std²). `inner`
/// may exceed `min(m, n)`.
pub fn factor_product(m: usize, n: usize, inner: usize, std: f64, rng: &mut RngState) -> DenseMatrix {
    let u = rng.gaussian_matrix(m, inner, std);
    let v = rng.gaussian_matrix(n, inner, std);
    u.matmul_nt(&v).expect("shared inner dimension")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svd::svd;

    #[test]
    fn noiseless_rank_is_bounded() {
        let spec = SyntheticSpec {
            noise_std: 0.0,
            ..SyntheticSpec::low_rank_plus_noise(5)
        };
        let x = generate_synthetic(&spec).unwrap();
        assert_eq!(x.shape(), (100, 100));
        assert!(svd(&x).unwrap().numerical_rank(1e-10) <= 10);
    }

    #[test]
    fn noisy_data_is_full_rank_and_reproducible() {
        let spec = SyntheticSpec::low_rank_plus_noise(6);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_eq!(svd(&a).unwrap().numerical_rank(1e-10), 100);
        let c = generate_synthetic(&SyntheticSpec { seed: 7, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs() {
        let base = SyntheticSpec::low_rank_plus_noise(0);
        for spec in [
            SyntheticSpec { true_rank: 101, ..base.clone() },
            SyntheticSpec { true_rank: 0, ..base.clone() },
            SyntheticSpec { m: 0, ..base.clone() },
            SyntheticSpec { signal_std: 0.0, ..base.clone() },
            SyntheticSpec { noise_std: -1.0, ..base.clone() },
        ] {
            assert!(generate_synthetic(&spec).is_err());
        }
    }
}
