use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ensure_finite, factor_product};
use crate::error::{check_open_unit, Error, Result};
use crate::objective::{DropoutConfig, FactorPair};
use crate::rng::RngState;
use crate::trainer::{train_deterministic_from, train_dropout_from, StepSchedule, TrainConfig};

/// Stochastic vs deterministic training over a (θ, d) grid on `X = U₀V₀ᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Config {
    pub m: usize,
    pub n: usize,
    /// Inner width of the data factors (may exceed `min(m, n)`).
    pub data_rank: usize,
    pub signal_std: f64,
    pub theta_list: Vec<f64>,
    pub d_list: Vec<usize>,
    pub iterations: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub ema_decay: f64,
    pub schedule: StepSchedule,
    pub eps0: Option<f64>,
    pub init_std: f64,
}

impl Fig1Config {
    /// 100×100 data of inner width 160, θ ∈ {0.1,…,0.9}, d ∈ {10, 40, 160}, 10,000 iterations.
    pub fn full(seed: u64) -> Self {
        Self {
            m: 100,
            n: 100,
            data_rank: 160,
            signal_std: 0.1,
            theta_list: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            d_list: vec![10, 40, 160],
            iterations: 10_000,
            seed,
            tolerance: 0.05,
            ema_decay: 0.999,
            schedule: StepSchedule::InverseTime { t0: 100.0 },
            eps0: None,
            init_std: 0.1,
        }
    }

    /// 30×30 data and 2,000 iterations. The EMA horizon shrinks with the run
    /// so that early, high objective values have decayed by the end.
    pub fn desk(seed: u64) -> Self {
        Self {
            m: 30,
            n: 30,
            iterations: 2_000,
            ema_decay: 0.995,
            ..Self::full(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &t in &self.theta_list {
            check_open_unit("theta", t)?;
        }
        check_open_unit("ema_decay", self.ema_decay)?;
        let bad = |name, value: f64, reason| Err(Error::Parameter { name, value, reason });
        if self.theta_list.is_empty() || self.d_list.is_empty() {
            return bad("grid", 0.0, "theta_list and d_list must be non-empty");
        }
        if self.d_list.contains(&0) {
            return bad("d", 0.0, "factor width must be at least 1");
        }
        if self.m == 0 || self.n == 0 || self.data_rank == 0 {
            return bad("m, n, data_rank", 0.0, "must be positive");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance", self.tolerance, "must be positive");
        }
        if !(self.signal_std > 0.0) {
            return bad("signal_std", self.signal_std, "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Cell {
    pub theta: f64,
    pub d: usize,
    pub eps0: f64,
    /// Last EMA of the sampled objective.
    pub final_ema: f64,
    /// Deterministic objective at the last dropout iterate.
    pub final_deterministic: f64,
    /// `|final_ema − final_deterministic| / final_deterministic`
    pub relative_gap: f64,
    pub within_tolerance: bool,
    /// Last value of the separate full-gradient run from the same start.
    pub reference_final: f64,
    /// `|final_ema − reference_final| / reference_final`
    pub reference_gap: f64,
    pub stochastic_trace: Vec<f64>,
    pub ema_trace: Vec<f64>,
    pub deterministic_trace: Vec<f64>,
    pub reference_trace: Vec<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Result {
    pub cells: Vec<Fig1Cell>,
    pub all_within_tolerance: bool,
    pub max_relative_gap: f64,
}

pub fn run_fig1(config: &Fig1Config) -> Result<Fig1Result> {
    config.validate()?;
    let root = RngState::new(config.seed);
    let mut data_rng = root.child(0);
    let x = factor_product(config.m, config.n, config.data_rank, config.signal_std, &mut data_rng);

    let grid: Vec<(usize, f64, usize)> = config
        .d_list
        .iter()
        .flat_map(|&d| config.theta_list.iter().map(move |&t| (d, t)))
        .enumerate()
        .map(|(i, (d, t))| (i, t, d))
        .collect();

    let cells = grid
        .par_iter()
        .map(|&(index, theta, d)| {
            let start = Instant::now();
            let mut rng = root.child(1 + index as u64);
            let init = FactorPair::new(
                rng.gaussian_matrix(config.m, d, config.init_std),
                rng.gaussian_matrix(config.n, d, config.init_std),
            )?;
            let train = TrainConfig {
                schedule: config.schedule,
                eps0: config.eps0,
                ema_decay: config.ema_decay,
                init_std: config.init_std,
                ..TrainConfig::new(config.iterations, d, DropoutConfig::fixed(theta)?)
            };
            let drop = train_dropout_from(&x, &train, init.clone(), &mut rng)?;
            let reference = train_deterministic_from(&x, &train, init)?;

            let final_ema = *drop.ema_trace.last().expect("iterations >= 1");
            let final_deterministic = *drop.deterministic_trace.last().expect("iterations >= 1");
            let reference_final = *reference.deterministic_trace.last().expect("iterations >= 1");
            let relative_gap = (final_ema - final_deterministic).abs() / final_deterministic;
            let reference_gap = (final_ema - reference_final).abs() / reference_final;
            for trace in [&drop.stochastic_trace, &drop.ema_trace, &drop.deterministic_trace] {
                ensure_finite("fig1 trace", trace)?;
            }
            Ok(Fig1Cell {
                theta,
                d,
                eps0: drop.eps0,
                final_ema,
                final_deterministic,
                relative_gap,
                within_tolerance: relative_gap <= config.tolerance,
                reference_final,
                reference_gap,
                stochastic_trace: drop.stochastic_trace,
                ema_trace: drop.ema_trace,
                deterministic_trace: drop.deterministic_trace,
                reference_trace: reference.deterministic_trace,
                wall_time: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Fig1Result {
        all_within_tolerance: cells.iter().all(|c| c.within_tolerance),
        max_relative_gap: cells.iter().map(|c| c.relative_gap).fold(0.0, f64::max),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_grid_is_reproducible_and_ordered() {
        let cfg = Fig1Config {
            m: 8,
            n: 6,
            data_rank: 12,
            theta_list: vec![0.3, 0.8],
            d_list: vec![2, 5],
            iterations: 300,
            ..Fig1Config::full(4)
        };
        let a = run_fig1(&cfg).unwrap();
        let mut b = run_fig1(&cfg).unwrap();
        for (x, y) in b.cells.iter_mut().zip(&a.cells) {
            x.wall_time = y.wall_time;
        }
        assert_eq!(a, b);
        let order: Vec<(usize, f64)> = a.cells.iter().map(|c| (c.d, c.theta)).collect();
        assert_eq!(order, vec![(2, 0.3), (2, 0.8), (5, 0.3), (5, 0.8)]);
        for c in &a.cells {
            assert_eq!(c.stochastic_trace.len(), 300);
            assert_eq!(c.reference_trace.len(), 300);
        }
    }

    #[test]
    fn rejects_bad_grid() {
        let mut cfg = Fig1Config::desk(0);
        cfg.theta_list = vec![1.0];
        assert!(run_fig1(&cfg).is_err());
        cfg = Fig1Config::desk(0);
        cfg.d_list = vec![0];
        assert!(run_fig1(&cfg).is_err());
    }
}
