use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adaptive::{gamma_of_p, p_of_theta};
use crate::closed_form::solve_closed_form;
use crate::error::{check_open_unit, Error, Result};
use crate::matrix::DenseMatrix;
use crate::objective::DropoutConfig;
use crate::rng::RngState;
use crate::trainer::{train_dropout, StepSchedule, TrainConfig};

/// Dropout factorization of a user matrix with alternating U/V blocks,
/// compared against the closed-form optimum at the matching `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructConfig {
    pub theta_list: Vec<f64>,
    pub d: usize,
    /// One epoch is `alternating_block` U-updates followed by as many V-updates.
    pub epochs: usize,
    pub alternating_block: usize,
    pub lr: f64,
    pub schedule: StepSchedule,
    /// Random row subsample size; `None` keeps every row.
    pub max_rows: Option<usize>,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            theta_list: vec![0.5, 0.8],
            d: 40,
            epochs: 100,
            alternating_block: 50,
            lr: 1e-4,
            schedule: StepSchedule::Constant,
            max_rows: Some(2000),
            init_std: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructRun {
    pub theta: f64,
    /// `p` with `θ(d) = θ`.
    pub p: f64,
    pub gamma: f64,
    pub d_bar: usize,
    pub mu: f64,
    /// Mean squared entry of `X − UVᵀ`.
    pub factorization_error: f64,
    /// Mean squared entry of `X − A_opt`.
    pub closed_form_error: f64,
    /// Mean squared entry of `UVᵀ − A_opt`.
    pub gap: f64,
    /// Same gap with the product divided by θ.
    pub gap_theta_divided: f64,
    pub final_objective: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructResult {
    pub rows: usize,
    pub cols: usize,
    pub source_rows: usize,
    pub runs: Vec<ReconstructRun>,
}

pub fn run_reconstruct(path: impl AsRef<Path>, config: &ReconstructConfig) -> Result<ReconstructResult> {
    let x = DenseMatrix::read_csv(path)?;
    run_reconstruct_matrix(&x, config)
}

pub fn run_reconstruct_matrix(x: &DenseMatrix, config: &ReconstructConfig) -> Result<ReconstructResult> {
    for &t in &config.theta_list {
        check_open_unit("theta", t)?;
    }
    let bad = |name, value: f64, reason| Err(Error::Parameter { name, value, reason });
    if config.theta_list.is_empty() {
        return bad("theta_list", 0.0, "must be non-empty");
    }
    if config.d == 0 || config.epochs == 0 || config.alternating_block == 0 {
        return bad("d, epochs, alternating_block", 0.0, "must be positive");
    }
    x.ensure_finite()?;
    let root = RngState::new(config.seed);
    let data = subsample_rows(x, config.max_rows, &mut root.child(0));
    let iterations = 2 * config.alternating_block * config.epochs;

    let mut runs = Vec::with_capacity(config.theta_list.len());
    for (i, &theta) in config.theta_list.iter().enumerate() {
        let start = Instant::now();
        let p = p_of_theta(theta, config.d)?;
        let train = TrainConfig {
            schedule: config.schedule,
            eps0: Some(config.lr),
            init_std: config.init_std,
            alternating_block: config.alternating_block,
            ..TrainConfig::new(iterations, config.d, DropoutConfig::fixed(theta)?)
        };
        let report = train_dropout(&data, &train, &mut root.child(1 + i as u64))?;
        let product = report.final_factors.product();
        let opt = solve_closed_form(&data, p)?;
        let entries = data.data().len() as f64;
        let mean_sq = |a: &DenseMatrix, b: &DenseMatrix| -> Result<f64> { Ok(a.sub(b)?.frobenius_norm_sq() / entries) };
        runs.push(ReconstructRun {
            theta,
            p,
            gamma: gamma_of_p(p)?,
            d_bar: opt.d_bar,
            mu: opt.mu,
            factorization_error: mean_sq(&data, &product)?,
            closed_form_error: mean_sq(&data, &opt.a_opt)?,
            gap: mean_sq(&product, &opt.a_opt)?,
            gap_theta_divided: mean_sq(&product.scaled(1.0 / theta), &opt.a_opt)?,
            final_objective: report.final_objective,
            wall_time: start.elapsed().as_secs_f64(),
        });
    }
    Ok(ReconstructResult {
        rows: data.rows(),
        cols: data.cols(),
        source_rows: x.rows(),
        runs,
    })
}

/// Rows in their original order, a uniformly random subset when `max_rows`
/// is below the row count.
fn subsample_rows(x: &DenseMatrix, max_rows: Option<usize>, rng: &mut RngState) -> DenseMatrix {
    let m = x.rows();
    let k = match max_rows {
        Some(k) if k < m => k.max(1),
        _ => return x.clone(),
    };
    let mut idx: Vec<usize> = (0..m).collect();
    for i in 0..k {
        let j = i + rng.below(m - i);
        idx.swap(i, j);
    }
    let mut chosen = idx[..k].to_vec();
    chosen.sort_unstable();
    DenseMatrix::from_fn(k, x.cols(), |i, j| x.get(chosen[i], j))
}
