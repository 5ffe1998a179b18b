//! Experiments for dropout matrix factorization: equivalence checks,
//! single training runs, the closed-form solver, and the three figure
//! reproductions. Every command writes CSV tables and/or a `report.json`.

mod commands;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "dropmf", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare the exact mask expectation with the deterministic objective on random instances
    CheckEquivalence(EquivalenceArgs),
    /// Train one factorization (dropout SGD or full-gradient descent)
    Train(TrainArgs),
    /// Solve the squared-nuclear-norm problem in closed form and dump spectra
    ClosedForm(ClosedFormArgs),
    /// Stochastic vs deterministic objective traces over a (theta, d) grid
    Fig1(Fig1Args),
    /// Spectra of fixed-rate, adaptive-rate and closed-form solutions
    Fig3(Fig3Args),
    /// Dropout reconstruction of a CSV matrix against the closed form
    Reconstruct(ReconstructArgs),
    /// Write a low-rank-plus-noise matrix to CSV
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        self != Format::Json
    }

    pub fn json(self) -> bool {
        self != Format::Csv
    }
}

#[derive(Args)]
pub struct OutputArgs {
    /// Output directory (created if missing)
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleKind {
    /// eps(t) = lr
    Constant,
    /// eps(t) = lr / t
    Diminishing,
    /// eps(t) = lr * t0 / (t0 + t)
    InverseTime,
}

#[derive(Args)]
pub struct ScheduleArgs {
    /// Base step size; defaults to theta^2 / (2 max(sigma1(X), |U0|^2, |V0|^2))
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleKind>,
    /// Offset for the inverse-time schedule
    #[arg(long, default_value_t = 100.0)]
    pub t0: f64,
}

/// Input matrix: a CSV file, or synthetic data when no file is given.
#[derive(Args)]
pub struct DataArgs {
    /// Header-free numeric CSV
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.1)]
    pub signal_std: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise_std: f64,
}

#[derive(Args)]
pub struct EquivalenceArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    /// Largest m and n
    #[arg(long, default_value_t = 8)]
    pub max_size: usize,
    #[arg(long, default_value_t = 12)]
    pub max_d: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
    pub theta: Vec<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    /// Fixed retain probability
    #[arg(long, conflicts_with = "p")]
    pub theta: Option<f64>,
    /// Adaptive rate: theta(d) = p / (d - (d-1) p)
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub iters: usize,
    #[command(flatten)]
    pub step: ScheduleArgs,
    /// Full-gradient descent on the deterministic objective instead of dropout SGD
    #[arg(long)]
    pub deterministic: bool,
    /// Alternate blocks of this many U-only and V-only updates (0 = joint)
    #[arg(long, default_value_t = 0)]
    pub block: usize,
    #[arg(long, default_value_t = 0.99)]
    pub ema_decay: f64,
    #[arg(long, default_value_t = 0.1)]
    pub init_std: f64,
    /// Average U V^T over this many final iterates
    #[arg(long, default_value_t = 0)]
    pub tail_average: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct ClosedFormArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.9)]
    pub p: f64,
    /// Also write A_opt as a_opt.csv
    #[arg(long)]
    pub save_matrix: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct Fig1Args {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// 30x30 data and 2,000 iterations unless overridden
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Inner width of the data factors
    #[arg(long, default_value_t = 160)]
    pub data_rank: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
    pub theta: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "10,40,160")]
    pub d: Vec<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    /// EMA decay (0.999 for the full grid, 0.995 with --desk)
    #[arg(long)]
    pub ema_decay: Option<f64>,
    #[command(flatten)]
    pub step: ScheduleArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Random,
    Svd,
}

#[derive(Args)]
pub struct Fig3Args {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.9)]
    pub p: f64,
    /// Retain probability of the fixed-rate run
    #[arg(long, default_value_t = 0.9)]
    pub theta: f64,
    #[arg(long, value_delimiter = ',', default_value = "20,40")]
    pub d: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub iters: usize,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise_std: f64,
    /// Singular values above this fraction of sigma1 count toward the rank
    #[arg(long, default_value_t = 1e-3)]
    pub rank_cutoff: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tail_fraction: f64,
    #[arg(long, value_enum, default_value = "random")]
    pub init: InitKind,
    /// Base step size (default is theta-aware, see `train --help`)
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 1000.0)]
    pub t0: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct ReconstructArgs {
    /// Header-free numeric CSV, one sample per row
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.8")]
    pub theta: Vec<f64>,
    #[arg(long, default_value_t = 40)]
    pub d: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// U-only updates followed by as many V-only updates per epoch
    #[arg(long, default_value_t = 50)]
    pub block: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Random row subsample (0 keeps all rows)
    #[arg(long, default_value_t = 2000)]
    pub max_rows: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.1)]
    pub signal_std: f64,
    #[arg(long, default_value_t = 0.01)]
    pub noise_std: f64,
    /// Destination CSV file
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::CheckEquivalence(a) => commands::check_equivalence(a),
        Command::Train(a) => commands::train(a),
        Command::ClosedForm(a) => commands::closed_form(a),
        Command::Fig1(a) => commands::fig1(a),
        Command::Fig3(a) => commands::fig3(a),
        Command::Reconstruct(a) => commands::reconstruct(a),
        Command::Generate(a) => commands::generate(a),
    }
}
