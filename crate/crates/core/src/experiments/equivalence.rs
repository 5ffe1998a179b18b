use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ensure_finite;
use crate::error::{Error, Result};
use crate::objective::{deterministic_objective, exact_expected_objective, FactorPair, MAX_ENUMERATION_D};
use crate::rng::RngState;

/// Random small instances on which the mask enumeration is compared with the
/// closed-form deterministic objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceConfig {
    pub instances: usize,
    pub max_m: usize,
    pub max_n: usize,
    pub max_d: usize,
    pub theta_list: Vec<f64>,
    pub seed: u64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            instances: 200,
            max_m: 8,
            max_n: 8,
            max_d: 12,
            theta_list: vec![0.1, 0.5, 0.9],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceInstance {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub theta: f64,
    pub enumerated: f64,
    pub deterministic: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceSummary {
    pub instances: Vec<EquivalenceInstance>,
    pub max_relative_error: f64,
    pub wall_time: f64,
}

pub fn run_equivalence(config: &EquivalenceConfig) -> Result<EquivalenceSummary> {
    if config.max_m == 0 || config.max_n == 0 || config.max_d == 0 || config.theta_list.is_empty() {
        return Err(Error::Parameter {
            name: "equivalence config",
            value: 0.0,
            reason: "sizes must be positive and theta_list non-empty",
        });
    }
    if config.max_d > MAX_ENUMERATION_D {
        return Err(Error::Capacity {
            d: config.max_d,
            max: MAX_ENUMERATION_D,
        });
    }
    let start = Instant::now();
    let root = RngState::new(config.seed);
    let mut instances = Vec::with_capacity(config.instances);
    for i in 0..config.instances {
        let mut rng = root.child(i as u64);
        let m = 1 + rng.below(config.max_m);
        let n = 1 + rng.below(config.max_n);
        let d = 1 + rng.below(config.max_d);
        let theta = config.theta_list[i % config.theta_list.len()];
        let x = rng.gaussian_matrix(m, n, 1.0);
        let f = FactorPair::new(rng.gaussian_matrix(m, d, 1.0), rng.gaussian_matrix(n, d, 1.0))?;
        let enumerated = exact_expected_objective(&x, &f, theta)?;
        let deterministic = deterministic_objective(&x, &f, theta)?;
        let relative_error = (enumerated - deterministic).abs() / deterministic.abs().max(f64::MIN_POSITIVE);
        instances.push(EquivalenceInstance {
            m,
            n,
            d,
            theta,
            enumerated,
            deterministic,
            relative_error,
        });
    }
    let errors: Vec<f64> = instances.iter().map(|r| r.relative_error).collect();
    ensure_finite("relative_error", &errors)?;
    Ok(EquivalenceSummary {
        max_relative_error: errors.iter().copied().fold(0.0, f64::max),
        instances,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
