//! Dropout SGD on the factors and its deterministic full-gradient twin.
//!
//! Each dropout iteration samples a column mask `r ~ Bernoulli(θ)^d`,
//! evaluates the residual `X − (1/θ)·U diag(r) Vᵀ`, and moves only the
//! surviving columns:
//!
//! ```text
//! [U; V] ← [U; V] + (2ε/θ) · [dU; dV] · diag(r)
//! dU = (X − (1/θ) U diag(r) Vᵀ) V,   dV = (X − (1/θ) U diag(r) Vᵀ)ᵀ U
//! ```
//!
//! which is a descent step on the sampled objective. Averaged over masks it
//! equals a gradient step of size `ε` on the deterministic objective, so
//! [`train_deterministic`] with the same schedule follows the mean path.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, shape_err, Error, Result};
use crate::matrix::DenseMatrix;
use crate::objective::{dropout_penalty_weight, kept_columns, omega_dropout, DropoutConfig, FactorPair};
use crate::rng::{sample_bernoulli_vector, RngState};
use crate::svd::spectral_norm;

/// Objective values above this abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Shape of the step-size sequence; the base size `ε₀` lives in [`TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `ε(t) = ε₀`
    Constant,
    /// `ε(t) = ε₀ / t`
    Diminishing,
    /// `ε(t) = ε₀ · t₀ / (t₀ + t)`, still O(1/t) but flat for the first `t₀` steps.
    InverseTime { t0: f64 },
}

impl StepSchedule {
    /// Step size at 1-based iteration `t`.
    pub fn at(&self, eps0: f64, t: usize) -> f64 {
        let t = t as f64;
        match *self {
            Self::Constant => eps0,
            Self::Diminishing => eps0 / t,
            Self::InverseTime { t0 } => eps0 * t0 / (t0 + t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Factor width `d`.
    pub d: usize,
    pub schedule: StepSchedule,
    /// Base step `ε₀`; `None` picks [`default_eps0`].
    pub eps0: Option<f64>,
    pub dropout: DropoutConfig,
    pub init_std: f64,
    pub ema_decay: f64,
    /// `b > 0`: `b` U-only updates, then `b` V-only updates, repeating.
    pub alternating_block: usize,
    /// Average `UVᵀ` over this many final iterates (0 disables).
    pub tail_average: usize,
}

impl TrainConfig {
    pub fn new(iterations: usize, d: usize, dropout: DropoutConfig) -> Self {
        Self {
            iterations,
            d,
            schedule: StepSchedule::Diminishing,
            eps0: None,
            dropout,
            init_std: 0.1,
            ema_decay: 0.99,
            alternating_block: 0,
            tail_average: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value: f64, reason| Err(Error::Parameter { name, value, reason });
        if self.iterations == 0 {
            return bad("iterations", 0.0, "must be at least 1");
        }
        if self.d == 0 {
            return bad("d", 0.0, "must be at least 1");
        }
        if let Some(e) = self.eps0 {
            if !(e > 0.0 && e.is_finite()) {
                return bad("eps0", e, "step size must be positive and finite");
            }
        }
        if let StepSchedule::InverseTime { t0 } = self.schedule {
            if !(t0 > 0.0) {
                return bad("t0", t0, "must be positive");
            }
        }
        if !(self.init_std > 0.0) {
            return bad("init_std", self.init_std, "must be positive");
        }
        check_open_unit("ema_decay", self.ema_decay)?;
        if self.tail_average > self.iterations {
            return bad("tail_average", self.tail_average as f64, "cannot exceed iterations");
        }
        self.dropout.validate()
    }
}

/// Per-iteration traces and the final state of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Sampled objective at each iterate (equal to the deterministic value
    /// for deterministic runs).
    pub stochastic_trace: Vec<f64>,
    pub ema_trace: Vec<f64>,
    pub deterministic_trace: Vec<f64>,
    pub final_factors: FactorPair,
    /// Deterministic objective at `final_factors`.
    pub final_objective: f64,
    /// Mean of `UVᵀ` over the last `tail_average` iterates.
    pub averaged_product: Option<DenseMatrix>,
    pub theta: f64,
    pub penalty_weight: f64,
    pub eps0: f64,
    pub wall_time: f64,
}

impl TrainReport {
    pub fn iterations(&self) -> usize {
        self.deterministic_trace.len()
    }

    /// `iteration,stochastic,ema,deterministic`
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "iteration,stochastic,ema,deterministic")?;
        for t in 0..self.iterations() {
            writeln!(
                w,
                "{},{:e},{:e},{:e}",
                t + 1,
                self.stochastic_trace[t],
                self.ema_trace[t],
                self.deterministic_trace[t]
            )?;
        }
        w.flush()?;
        Ok(())
    }

    /// Product used as the solution: the tail average when recorded.
    pub fn solution(&self) -> DenseMatrix {
        self.averaged_product
            .clone()
            .unwrap_or_else(|| self.final_factors.product())
    }
}

fn check_mask(f: &FactorPair, mask: &[bool]) -> Result<()> {
    if mask.len() != f.d() {
        return Err(shape_err("mask", format!("length {}", f.d()), format!("{}", mask.len())));
    }
    Ok(())
}

/// Residual-times-factor blocks of the sampled objective for mask `r`:
/// `dU = (X − (1/θ)U diag(r)Vᵀ)·V`, `dV = (X − (1/θ)U diag(r)Vᵀ)ᵀ·U`.
pub fn dropout_gradients(
    x: &DenseMatrix,
    f: &FactorPair,
    mask: &[bool],
    theta: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_open_unit("theta", theta)?;
    f.check_target(x, "dropout_gradients")?;
    check_mask(f, mask)?;
    let r = crate::objective::masked_residual(x, f, theta, &kept_columns(mask));
    Ok((r.matmul(&f.v)?, r.matmul_tn(&f.u)?))
}

/// `[U; V] + (2ε/θ)·[dU; dV]·diag(r)`. Columns with `r_k = 0` are copied unchanged.
pub fn sgd_step(
    f: &FactorPair,
    du: &DenseMatrix,
    dv: &DenseMatrix,
    mask: &[bool],
    epsilon: f64,
    theta: f64,
) -> Result<FactorPair> {
    check_open_unit("theta", theta)?;
    check_mask(f, mask)?;
    if du.shape() != f.u.shape() || dv.shape() != f.v.shape() {
        return Err(shape_err(
            "sgd_step",
            format!("dU {:?}, dV {:?}", f.u.shape(), f.v.shape()),
            format!("dU {:?}, dV {:?}", du.shape(), dv.shape()),
        ));
    }
    let c = 2.0 * epsilon / theta;
    let mut out = f.clone();
    add_masked(&mut out.u, du, mask, c);
    add_masked(&mut out.v, dv, mask, c);
    Ok(out)
}

fn add_masked(target: &mut DenseMatrix, delta: &DenseMatrix, mask: &[bool], c: f64) {
    let d = mask.len();
    for (trow, drow) in target.data_mut().chunks_exact_mut(d).zip(delta.data().chunks_exact(d)) {
        for k in 0..d {
            if mask[k] {
                trow[k] += c * drow[k];
            }
        }
    }
}

/// Gradients of `‖X − UVᵀ‖² + λ·Ω(U, V)`:
/// `∇_U = −2(X − UVᵀ)V + 2λ·U·diag(‖v_k‖²)` and symmetrically for `V`.
pub fn deterministic_gradients(
    x: &DenseMatrix,
    f: &FactorPair,
    lambda: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    f.check_target(x, "deterministic_gradients")?;
    let r = x.sub(&f.product())?;
    let (gu, gv) = gradients_from_residual(&r, f, lambda);
    Ok((gu, gv))
}

fn gradients_from_residual(r: &DenseMatrix, f: &FactorPair, lambda: f64) -> (DenseMatrix, DenseMatrix) {
    let nu = f.u.column_norms_sq();
    let nv = f.v.column_norms_sq();
    let mut gu = r.matmul(&f.v).expect("checked");
    gu.scale_mut(-2.0);
    let wu: Vec<f64> = nv.iter().map(|v| 2.0 * lambda * v).collect();
    gu.axpy(1.0, &f.u.scale_columns(&wu)).expect("checked");
    let mut gv = r.matmul_tn(&f.u).expect("checked");
    gv.scale_mut(-2.0);
    let wv: Vec<f64> = nu.iter().map(|v| 2.0 * lambda * v).collect();
    gv.axpy(1.0, &f.v.scale_columns(&wv)).expect("checked");
    (gu, gv)
}

/// `θ² / (2·max(σ₁(X), σ₁(U₀)², σ₁(V₀)²))`: half the stability limit of a
/// dropout step near the initial point, with `‖V‖₂²` standing in for the
/// curvature of `‖X − (1/θ)U diag(r) Vᵀ‖²` in `U`.
pub fn default_eps0(x: &DenseMatrix, theta: f64, init: &FactorPair) -> f64 {
    let su = spectral_norm(&init.u);
    let sv = spectral_norm(&init.v);
    let scale = spectral_norm(x).max(su * su).max(sv * sv).max(f64::MIN_POSITIVE);
    theta * theta / (2.0 * scale)
}

fn gaussian_init(x: &DenseMatrix, config: &TrainConfig, rng: &mut RngState) -> FactorPair {
    let u = rng.gaussian_matrix(x.rows(), config.d, config.init_std);
    let v = rng.gaussian_matrix(x.cols(), config.d, config.init_std);
    FactorPair { u, v }
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Joint,
    UOnly,
    VOnly,
}

fn phase(block: usize, t: usize) -> Phase {
    if block == 0 {
        Phase::Joint
    } else if ((t - 1) / block) % 2 == 0 {
        Phase::UOnly
    } else {
        Phase::VOnly
    }
}

struct Recorder {
    stochastic: Vec<f64>,
    ema: Vec<f64>,
    deterministic: Vec<f64>,
    decay: f64,
    tail_start: usize,
    tail_sum: Option<DenseMatrix>,
    tail_count: usize,
}

impl Recorder {
    fn new(config: &TrainConfig) -> Self {
        let n = config.iterations;
        Self {
            stochastic: Vec::with_capacity(n),
            ema: Vec::with_capacity(n),
            deterministic: Vec::with_capacity(n),
            decay: config.ema_decay,
            tail_start: n - config.tail_average,
            tail_sum: None,
            tail_count: 0,
        }
    }

    fn record(&mut self, t: usize, stochastic: f64, deterministic: f64) -> Result<()> {
        for v in [stochastic, deterministic] {
            if !v.is_finite() || v > DIVERGENCE_THRESHOLD {
                return Err(Error::Divergence { iteration: t, value: v });
            }
        }
        let ema = match self.ema.last() {
            Some(prev) => self.decay * prev + (1.0 - self.decay) * stochastic,
            None => stochastic,
        };
        self.stochastic.push(stochastic);
        self.ema.push(ema);
        self.deterministic.push(deterministic);
        Ok(())
    }

    /// Called with the iterate after update `t`.
    fn after_update(&mut self, t: usize, f: &FactorPair) {
        if t > self.tail_start {
            let p = f.product();
            match self.tail_sum.as_mut() {
                Some(acc) => acc.axpy(1.0, &p).expect("same shape"),
                None => self.tail_sum = Some(p),
            }
            self.tail_count += 1;
        }
    }

    fn finish(
        self,
        x: &DenseMatrix,
        f: FactorPair,
        theta: f64,
        lambda: f64,
        eps0: f64,
        start: Instant,
    ) -> Result<TrainReport> {
        let final_objective = x.sub(&f.product())?.frobenius_norm_sq() + lambda * omega_dropout(&f);
        if !final_objective.is_finite() || final_objective > DIVERGENCE_THRESHOLD {
            return Err(Error::Divergence {
                iteration: self.deterministic.len() + 1,
                value: final_objective,
            });
        }
        let count = self.tail_count;
        let averaged_product = self.tail_sum.map(|s| s.scaled(1.0 / count as f64));
        Ok(TrainReport {
            stochastic_trace: self.stochastic,
            ema_trace: self.ema,
            deterministic_trace: self.deterministic,
            final_factors: f,
            final_objective,
            averaged_product,
            theta,
            penalty_weight: lambda,
            eps0,
            wall_time: start.elapsed().as_secs_f64(),
        })
    }
}

/// Dropout SGD from a Gaussian initialisation drawn from `rng`; the same
/// stream then supplies the masks.
pub fn train_dropout(x: &DenseMatrix, config: &TrainConfig, rng: &mut RngState) -> Result<TrainReport> {
    config.validate()?;
    let init = gaussian_init(x, config, rng);
    train_dropout_from(x, config, init, rng)
}

pub fn train_dropout_from(
    x: &DenseMatrix,
    config: &TrainConfig,
    init: FactorPair,
    rng: &mut RngState,
) -> Result<TrainReport> {
    config.validate()?;
    init.check_target(x, "train_dropout")?;
    if init.d() != config.d {
        return Err(shape_err("train_dropout", format!("d = {}", config.d), format!("{}", init.d())));
    }
    let start = Instant::now();
    let d = config.d;
    let theta = config.dropout.theta_for(d)?;
    let lambda = dropout_penalty_weight(theta);
    let eps0 = config.eps0.unwrap_or_else(|| default_eps0(x, theta, &init));
    let mut rec = Recorder::new(config);
    let mut f = init;

    for t in 1..=config.iterations {
        let mask = sample_bernoulli_vector(d, theta, rng)?;
        let kept = kept_columns(&mask);
        let dropped: Vec<usize> = (0..d).filter(|&k| !mask[k]).collect();

        let uk = f.u.select_columns(&kept);
        let vk = f.v.select_columns(&kept);
        let kept_prod = uk.matmul_nt(&vk)?;
        let mut resid = x.clone();
        resid.axpy(-1.0 / theta, &kept_prod)?;
        let stochastic = resid.frobenius_norm_sq();

        let mut full_resid = x.sub(&kept_prod)?;
        if !dropped.is_empty() {
            let drop_prod = f.u.select_columns(&dropped).matmul_nt(&f.v.select_columns(&dropped))?;
            full_resid.axpy(-1.0, &drop_prod)?;
        }
        let deterministic = full_resid.frobenius_norm_sq() + lambda * omega_dropout(&f);
        rec.record(t, stochastic, deterministic)?;

        if !kept.is_empty() {
            let c = 2.0 * config.schedule.at(eps0, t) / theta;
            let ph = phase(config.alternating_block, t);
            let du = (ph != Phase::VOnly).then(|| resid.matmul(&vk)).transpose()?;
            let dv = (ph != Phase::UOnly).then(|| resid.matmul_tn(&uk)).transpose()?;
            if let Some(du) = du {
                scatter_add(&mut f.u, &du, &kept, c);
            }
            if let Some(dv) = dv {
                scatter_add(&mut f.v, &dv, &kept, c);
            }
        }
        rec.after_update(t, &f);
    }
    rec.finish(x, f, theta, lambda, eps0, start)
}

/// `target[:, cols[j]] += c · delta[:, j]`
fn scatter_add(target: &mut DenseMatrix, delta: &DenseMatrix, cols: &[usize], c: f64) {
    let d = target.cols();
    let k = cols.len();
    for (trow, drow) in target.data_mut().chunks_exact_mut(d).zip(delta.data().chunks_exact(k)) {
        for (j, &col) in cols.iter().enumerate() {
            trow[col] += c * drow[j];
        }
    }
}

/// Full-gradient descent on the deterministic objective with the dropout
/// weight `(1−θ)/θ`. `rng` is used only for the initial factors.
pub fn train_deterministic(x: &DenseMatrix, config: &TrainConfig, rng: &mut RngState) -> Result<TrainReport> {
    config.validate()?;
    let init = gaussian_init(x, config, rng);
    train_deterministic_from(x, config, init)
}

pub fn train_deterministic_from(x: &DenseMatrix, config: &TrainConfig, init: FactorPair) -> Result<TrainReport> {
    config.validate()?;
    let theta = config.dropout.theta_for(config.d)?;
    train_penalized_from(x, config, init, dropout_penalty_weight(theta))
}

/// Gradient descent on `‖X − UVᵀ‖² + λ·Ω` with an explicit `λ ≥ 0`
/// (`λ = 0` is plain factorization). The step base defaults as for the
/// dropout run with θ from `config.dropout`.
pub fn train_penalized_from(
    x: &DenseMatrix,
    config: &TrainConfig,
    init: FactorPair,
    lambda: f64,
) -> Result<TrainReport> {
    config.validate()?;
    init.check_target(x, "train_deterministic")?;
    if init.d() != config.d {
        return Err(shape_err("train_deterministic", format!("d = {}", config.d), format!("{}", init.d())));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Parameter {
            name: "lambda",
            value: lambda,
            reason: "penalty weight must be non-negative",
        });
    }
    let start = Instant::now();
    let theta = config.dropout.theta_for(config.d)?;
    let eps0 = config.eps0.unwrap_or_else(|| default_eps0(x, theta, &init));
    let mut rec = Recorder::new(config);
    let mut f = init;

    for t in 1..=config.iterations {
        let resid = x.sub(&f.product())?;
        let value = resid.frobenius_norm_sq() + lambda * omega_dropout(&f);
        rec.record(t, value, value)?;

        let eps = config.schedule.at(eps0, t);
        let (gu, gv) = gradients_from_residual(&resid, &f, lambda);
        match phase(config.alternating_block, t) {
            Phase::Joint => {
                f.u.axpy(-eps, &gu)?;
                f.v.axpy(-eps, &gv)?;
            }
            Phase::UOnly => f.u.axpy(-eps, &gu)?,
            Phase::VOnly => f.v.axpy(-eps, &gv)?,
        }
        rec.after_update(t, &f);
    }
    rec.finish(x, f, theta, lambda, eps0, start)
}
