use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ensure_finite, generate_synthetic, SyntheticSpec};
use crate::closed_form::solve_closed_form;
use crate::error::{check_open_unit, Error, Result};
use crate::matrix::DenseMatrix;
use crate::nuclear::equal_spread_factorization;
use crate::objective::{DropoutConfig, FactorPair};
use crate::rng::RngState;
use crate::svd::{numerical_rank, svd};
use crate::trainer::{train_dropout_from, StepSchedule, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fig3Init {
    /// Gaussian factors with `init_std`.
    Random,
    /// Exact equal-spread factorization of the rank-`true_rank` truncation of X.
    SvdInformed,
}

/// Fixed-θ dropout, adaptive θ(d) dropout, and the closed-form optimum on
/// low-rank-plus-noise data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Config {
    pub data: SyntheticSpec,
    pub p: f64,
    pub theta_bar: f64,
    pub d_list: Vec<usize>,
    pub iterations: usize,
    /// Fraction of final iterates whose products are averaged into the solution.
    pub tail_fraction: f64,
    pub rank_cutoff: f64,
    pub schedule: StepSchedule,
    pub eps0: Option<f64>,
    pub init: Fig3Init,
    pub init_std: f64,
}

impl Fig3Config {
    pub fn standard(seed: u64) -> Self {
        Self {
            data: SyntheticSpec::low_rank_plus_noise(seed),
            p: 0.9,
            theta_bar: 0.9,
            d_list: vec![20, 40],
            iterations: 100_000,
            tail_fraction: 0.5,
            rank_cutoff: 1e-3,
            schedule: StepSchedule::InverseTime { t0: 1000.0 },
            eps0: None,
            init: Fig3Init::Random,
            init_std: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        check_open_unit("p", self.p)?;
        check_open_unit("theta_bar", self.theta_bar)?;
        let bad = |name, value: f64, reason| Err(Error::Parameter { name, value, reason });
        if self.d_list.is_empty() || self.d_list.contains(&0) {
            return bad("d_list", 0.0, "must be non-empty with positive widths");
        }
        if self.init == Fig3Init::SvdInformed && self.d_list.iter().any(|&d| d < self.data.true_rank) {
            return bad("d_list", self.data.true_rank as f64, "SVD-informed start needs d >= true_rank");
        }
        if !(0.0..1.0).contains(&self.tail_fraction) {
            return bad("tail_fraction", self.tail_fraction, "must lie in [0, 1)");
        }
        if !(self.rank_cutoff > 0.0 && self.rank_cutoff < 1.0) {
            return bad("rank_cutoff", self.rank_cutoff, "must lie in (0, 1)");
        }
        if self.iterations == 0 {
            return bad("iterations", 0.0, "must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Run {
    pub d: usize,
    pub dropout: DropoutConfig,
    pub theta: f64,
    pub eps0: f64,
    pub spectrum: Vec<f64>,
    pub numerical_rank: usize,
    /// `‖solution − A_opt‖_F / ‖A_opt‖_F`
    pub relative_distance_to_opt: f64,
    pub final_objective: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig3Result {
    pub data_spectrum: Vec<f64>,
    pub closed_form_spectrum: Vec<f64>,
    pub mu: f64,
    pub d_bar: usize,
    pub closed_form_rank: usize,
    pub runs: Vec<Fig3Run>,
}

impl Fig3Result {
    pub fn adaptive_runs(&self) -> impl Iterator<Item = &Fig3Run> {
        self.runs.iter().filter(|r| matches!(r.dropout, DropoutConfig::Adaptive { .. }))
    }

    pub fn fixed_runs(&self) -> impl Iterator<Item = &Fig3Run> {
        self.runs.iter().filter(|r| matches!(r.dropout, DropoutConfig::Fixed { .. }))
    }
}

pub fn run_fig3(config: &Fig3Config) -> Result<Fig3Result> {
    config.validate()?;
    let x = generate_synthetic(&config.data)?;
    let data_svd = svd(&x)?;
    let opt = solve_closed_form(&x, config.p)?;
    let opt_norm = opt.a_opt.frobenius_norm();
    let truncated = (config.init == Fig3Init::SvdInformed).then(|| {
        let r = config.data.true_rank;
        let kept: Vec<f64> = (0..data_svd.sigma.len())
            .map(|i| if i < r { data_svd.sigma[i] } else { 0.0 })
            .collect();
        data_svd.reconstruct_with(&kept)
    });

    let mut jobs = Vec::new();
    for &d in &config.d_list {
        jobs.push((d, DropoutConfig::fixed(config.theta_bar)?));
        jobs.push((d, DropoutConfig::adaptive(config.p)?));
    }
    let root = RngState::new(config.data.seed).child(1);

    let runs = jobs
        .par_iter()
        .enumerate()
        .map(|(index, &(d, dropout))| {
            let start = Instant::now();
            let mut rng = root.child(index as u64);
            let init = match &truncated {
                Some(t) => equal_spread_factorization(t, d)?,
                None => FactorPair::new(
                    rng.gaussian_matrix(x.rows(), d, config.init_std),
                    rng.gaussian_matrix(x.cols(), d, config.init_std),
                )?,
            };
            let train = TrainConfig {
                schedule: config.schedule,
                eps0: config.eps0,
                init_std: config.init_std,
                tail_average: (config.tail_fraction * config.iterations as f64) as usize,
                ..TrainConfig::new(config.iterations, d, dropout)
            };
            let report = train_dropout_from(&x, &train, init, &mut rng)?;
            let solution: DenseMatrix = report.solution();
            let spectrum = svd(&solution)?.sigma;
            ensure_finite("fig3 spectrum", &spectrum)?;
            let distance = solution.sub(&opt.a_opt)?.frobenius_norm() / opt_norm.max(f64::MIN_POSITIVE);
            Ok(Fig3Run {
                d,
                dropout,
                theta: report.theta,
                eps0: report.eps0,
                numerical_rank: numerical_rank(&spectrum, config.rank_cutoff),
                spectrum,
                relative_distance_to_opt: distance,
                final_objective: report.final_objective,
                wall_time: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let closed_form_spectrum = opt.shrunk_sigma.clone();
    Ok(Fig3Result {
        closed_form_rank: numerical_rank(&closed_form_spectrum, config.rank_cutoff),
        data_spectrum: data_svd.sigma,
        closed_form_spectrum,
        mu: opt.mu,
        d_bar: opt.d_bar,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_instance_layout() {
        let cfg = Fig3Config {
            data: SyntheticSpec {
                m: 20,
                n: 15,
                true_rank: 3,
                ..SyntheticSpec::low_rank_plus_noise(2)
            },
            d_list: vec![6],
            iterations: 2000,
            init: Fig3Init::SvdInformed,
            ..Fig3Config::standard(2)
        };
        let r = run_fig3(&cfg).unwrap();
        assert_eq!(r.runs.len(), 2);
        assert_eq!(r.adaptive_runs().count(), 1);
        assert_eq!(r.fixed_runs().count(), 1);
        assert_eq!(r.data_spectrum.len(), 15);
        assert_eq!(r.closed_form_rank, r.d_bar);
        let a = r.adaptive_runs().next().unwrap();
        assert!(a.theta < cfg.p);
        assert!(a.relative_distance_to_opt.is_finite());
    }

    #[test]
    fn svd_start_needs_enough_columns() {
        let cfg = Fig3Config {
            d_list: vec![5],
            init: Fig3Init::SvdInformed,
            ..Fig3Config::standard(0)
        };
        assert!(run_fig3(&cfg).is_err());
    }
}
