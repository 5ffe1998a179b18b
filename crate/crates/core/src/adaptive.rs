//! Size-dependent retain probability and the parameter maps between
//! retain probabilities and penalty weights.
//!
//! With `θ(d) = p / (d − (d−1)p)` the induced weight `(1−θ(d))/θ(d)` equals
//! `d(1−p)/p`, which is what makes the penalty immune to column duplication.

use crate::error::{check_open_unit, Error, Result};
use crate::objective::{omega_dropout, FactorPair};

/// `θ(d) = p / (d − (d−1)·p)`
pub fn theta_of_d(p: f64, d: usize) -> Result<f64> {
    check_open_unit("p", p)?;
    if d == 0 {
        return Err(Error::Parameter {
            name: "d",
            value: 0.0,
            reason: "factor width must be at least 1",
        });
    }
    let d = d as f64;
    Ok(p / (d - (d - 1.0) * p))
}

/// Inverse of [`theta_of_d`] in `p` for fixed `d`: `p = dθ / (1 + (d−1)θ)`.
pub fn p_of_theta(theta: f64, d: usize) -> Result<f64> {
    check_open_unit("theta", theta)?;
    if d == 0 {
        return Err(Error::Parameter {
            name: "d",
            value: 0.0,
            reason: "factor width must be at least 1",
        });
    }
    let d = d as f64;
    Ok(d * theta / (1.0 + (d - 1.0) * theta))
}

/// `λ = (1−θ)/θ`
pub fn lambda_of_theta(theta: f64) -> Result<f64> {
    check_open_unit("theta", theta)?;
    Ok((1.0 - theta) / theta)
}

/// `θ = 1/(1+λ)`; `λ = 0` would give θ = 1, which is excluded.
pub fn theta_of_lambda(lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter {
            name: "lambda",
            value: lambda,
            reason: "must be finite and > 0 (lambda = 0 maps to the excluded boundary theta = 1)",
        });
    }
    Ok(1.0 / (1.0 + lambda))
}

/// `γ = (1−p)/p`, the squared-nuclear-norm weight. Same algebra as λ(θ).
pub fn gamma_of_p(p: f64) -> Result<f64> {
    check_open_unit("p", p)?;
    Ok((1.0 - p) / p)
}

/// `((1−θ(d))/θ(d)) · Ω(U, V)` with `d` the width of `f`.
pub fn adapted_penalty(f: &FactorPair, p: f64) -> Result<f64> {
    let theta = theta_of_d(p, f.d())?;
    Ok((1.0 - theta) / theta * omega_dropout(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;
    use crate::nuclear::{equal_spread_factorization, nuclear_norm, pathological_double};
    use crate::rng::RngState;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn theta_of_d_examples() {
        for p in [0.1, 0.5, 0.9] {
            assert_eq!(theta_of_d(p, 1).unwrap(), p);
        }
        assert!((theta_of_d(0.9, 10).unwrap() - 0.473_684_210_526_315_8).abs() < 1e-15);
        let mut prev = 1.0;
        for d in [1, 10, 100, 1000] {
            let t = theta_of_d(0.5, d).unwrap();
            assert!(t < prev && t > 0.0);
            prev = t;
            if d > 1 {
                // p / (d(1−p)) asymptote
                let asym = 0.5 / (d as f64 * 0.5);
                assert!(rel(t, asym) < 1.0 / d as f64 + 1e-12);
            }
        }
        assert!(theta_of_d(1.0, 3).is_err());
        assert!(theta_of_d(0.5, 0).is_err());
    }

    #[test]
    fn induced_weight_is_linear_in_d() {
        for &p in &[0.2, 0.5, 0.9] {
            for d in 1..50 {
                let l = lambda_of_theta(theta_of_d(p, d).unwrap()).unwrap();
                assert!(rel(l, d as f64 * (1.0 - p) / p) < 1e-12);
            }
        }
    }

    #[test]
    fn p_of_theta_inverts() {
        for d in [1, 5, 40] {
            for p in [0.05, 0.5, 0.95] {
                let t = theta_of_d(p, d).unwrap();
                assert!((p_of_theta(t, d).unwrap() - p).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn lambda_theta_maps() {
        assert_eq!(lambda_of_theta(0.5).unwrap(), 1.0);
        assert_eq!(gamma_of_p(0.5).unwrap(), 1.0);
        for t in [0.01, 0.3, 0.5, 0.77, 0.99] {
            let back = theta_of_lambda(lambda_of_theta(t).unwrap()).unwrap();
            assert!((back - t).abs() <= 1e-15);
        }
        assert!(theta_of_lambda(0.0).is_err());
        assert!(theta_of_lambda(-1.0).is_err());
        for l in [1e-6, 0.3, 1.0, 42.0, 1e6] {
            let t = theta_of_lambda(l).unwrap();
            assert!(t > 0.0 && t < 1.0);
            assert!(rel(lambda_of_theta(t).unwrap(), l) < 1e-9);
        }
    }

    #[test]
    fn d1_penalty() {
        let u = DenseMatrix::new(2, 1, vec![1.0, 2.0]).unwrap();
        let v = DenseMatrix::new(3, 1, vec![0.5, 0.0, 1.0]).unwrap();
        let f = FactorPair::new(u, v).unwrap();
        let expect = (1.0 - 0.7) / 0.7 * 5.0 * 1.25;
        assert!(rel(adapted_penalty(&f, 0.7).unwrap(), expect) < 1e-15);
    }

    #[test]
    fn doubling_invariance_and_iteration() {
        let mut rng = RngState::new(17);
        let f = FactorPair::new(rng.gaussian_matrix(5, 3, 1.0), rng.gaussian_matrix(4, 3, 1.0)).unwrap();
        let base = adapted_penalty(&f, 0.6).unwrap();
        let once = adapted_penalty(&pathological_double(&f), 0.6).unwrap();
        assert!(rel(once, base) <= 1e-12);
        let mut g = f.clone();
        for _ in 0..5 {
            g = pathological_double(&g);
        }
        assert_eq!(g.d(), 3 * 32);
        assert!(rel(adapted_penalty(&g, 0.6).unwrap(), base) <= 1e-10);
    }

    #[test]
    fn envelope_bound_with_tight_witness() {
        let mut rng = RngState::new(23);
        for trial in 0..10 {
            let rank = 1 + trial % 3;
            let x = rng
                .gaussian_matrix(6, rank, 1.0)
                .matmul_nt(&rng.gaussian_matrix(5, rank, 1.0))
                .unwrap();
            let p = [0.2, 0.5, 0.8][trial % 3];
            let nuc = nuclear_norm(&x).unwrap();
            let bound = (1.0 - p) / p * nuc * nuc;
            for k in 1..=4 {
                let d = k * rank;
                let w = equal_spread_factorization(&x, d).unwrap();
                assert!(w.product().max_abs_diff(&x) < 1e-10, "{trial} {d} {}", w.product().max_abs_diff(&x));
                let pen = adapted_penalty(&w, p).unwrap();
                assert!(pen >= bound - 1e-8);
                assert!(pen <= 1.05 * bound, "witness {pen} vs bound {bound}");
            }
        }
    }
}
