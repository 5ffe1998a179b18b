use std::time::Instant;

use anyhow::{bail, Context};
use dropmf::closed_form::solve_closed_form;
use dropmf::experiments::{
    generate_synthetic, run_equivalence, run_fig1, run_fig3, run_reconstruct, write_spectrum_csv, EquivalenceConfig,
    ExperimentReport, Fig1Config, Fig3Config, Fig3Init, ReconstructConfig, SyntheticSpec,
};
use dropmf::svd::numerical_rank;
use dropmf::trainer::{train_deterministic, train_dropout, StepSchedule, TrainConfig};
use dropmf::{DenseMatrix, DropoutConfig, RngState};
use serde_json::json;

use crate::output::Sink;
use crate::{
    ClosedFormArgs, DataArgs, EquivalenceArgs, Fig1Args, Fig3Args, GenerateArgs, InitKind, ReconstructArgs,
    ScheduleArgs, ScheduleKind, TrainArgs,
};

fn schedule(args: &ScheduleArgs, default: ScheduleKind) -> StepSchedule {
    match args.schedule.unwrap_or(default) {
        ScheduleKind::Constant => StepSchedule::Constant,
        ScheduleKind::Diminishing => StepSchedule::Diminishing,
        ScheduleKind::InverseTime => StepSchedule::InverseTime { t0: args.t0 },
    }
}

fn load(data: &DataArgs, seed: u64) -> anyhow::Result<(DenseMatrix, serde_json::Value)> {
    match &data.input {
        Some(path) => {
            let x = DenseMatrix::read_csv(path).with_context(|| format!("reading {}", path.display()))?;
            Ok((x, json!({ "input": path })))
        }
        None => {
            let spec = SyntheticSpec {
                m: data.m,
                n: data.n,
                true_rank: data.rank,
                signal_std: data.signal_std,
                noise_std: data.noise_std,
                seed,
            };
            Ok((generate_synthetic(&spec)?, json!({ "synthetic": spec })))
        }
    }
}

fn fmt_spectrum(s: &[f64], k: usize) -> String {
    let head: Vec<String> = s.iter().take(k).map(|v| format!("{v:.3e}")).collect();
    format!("[{}{}]", head.join(", "), if s.len() > k { ", ..." } else { "" })
}

pub fn check_equivalence(a: EquivalenceArgs) -> anyhow::Result<()> {
    let sink = Sink::new(&a.output)?;
    let cfg = EquivalenceConfig {
        instances: a.instances,
        max_m: a.max_size,
        max_n: a.max_size,
        max_d: a.max_d,
        theta_list: a.theta,
        seed: a.seed,
    };
    let s = run_equivalence(&cfg)?;
    sink.table(
        "equivalence.csv",
        "m,n,d,theta,enumerated,deterministic,relative_error",
        s.instances.iter().map(|r| {
            format!(
                "{},{},{},{},{:e},{:e},{:e}",
                r.m, r.n, r.d, r.theta, r.enumerated, r.deterministic, r.relative_error
            )
        }),
    )?;
    sink.report(&ExperimentReport::new("check-equivalence", a.seed, s.wall_time, &cfg, &s)?)?;
    println!(
        "{} instances, max relative error {:.3e} ({:.2}s)",
        s.instances.len(),
        s.max_relative_error,
        s.wall_time
    );
    if s.max_relative_error > 1e-10 {
        bail!("relative error above 1e-10");
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> anyhow::Result<()> {
    let sink = Sink::new(&a.output)?;
    let (x, source) = load(&a.data, a.seed)?;
    let dropout = match (a.theta, a.p) {
        (Some(t), None) => DropoutConfig::fixed(t)?,
        (None, Some(p)) => DropoutConfig::adaptive(p)?,
        (None, None) => DropoutConfig::fixed(0.5)?,
        (Some(_), Some(_)) => unreachable!("clap rejects --theta with --p"),
    };
    let cfg = TrainConfig {
        schedule: schedule(&a.step, ScheduleKind::InverseTime),
        eps0: a.step.lr,
        ema_decay: a.ema_decay,
        init_std: a.init_std,
        alternating_block: a.block,
        tail_average: a.tail_average,
        ..TrainConfig::new(a.iters, a.d, dropout)
    };
    // Separate streams for the data and for training keep both reproducible.
    let mut rng = RngState::new(a.seed).child(1);
    let report = if a.deterministic {
        train_deterministic(&x, &cfg, &mut rng)?
    } else {
        train_dropout(&x, &cfg, &mut rng)?
    };
    if sink.csv {
        report.write_trace_csv(sink.path("trace.csv"))?;
        report.final_factors.u.write_csv(sink.path("u.csv"))?;
        report.final_factors.v.write_csv(sink.path("v.csv"))?;
    }
    let params = json!({ "train": cfg, "data": source, "deterministic": a.deterministic, "seed": a.seed });
    let results = json!({
        "theta": report.theta,
        "penalty_weight": report.penalty_weight,
        "eps0": report.eps0,
        "final_objective": report.final_objective,
        "stochastic_trace": report.stochastic_trace,
        "ema_trace": report.ema_trace,
        "deterministic_trace": report.deterministic_trace,
    });
    sink.report(&ExperimentReport::new("train", a.seed, report.wall_time, &params, &results)?)?;
    println!(
        "theta {:.4}, eps0 {:.3e}, objective {:.6e} -> {:.6e} ({:.2}s)",
        report.theta,
        report.eps0,
        report.deterministic_trace[0],
        report.final_objective,
        report.wall_time
    );
    Ok(())
}

pub fn closed_form(a: ClosedFormArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let sink = Sink::new(&a.output)?;
    let (x, source) = load(&a.data, a.seed)?;
    let sol = solve_closed_form(&x, a.p)?;
    if sink.csv {
        write_spectrum_csv(
            sink.path("spectrum.csv"),
            &[("data", &sol.sigma), ("closed_form", &sol.shrunk_sigma)],
        )?;
        if a.save_matrix {
            sol.a_opt.write_csv(sink.path("a_opt.csv"))?;
        }
    }
    let results = json!({
        "mu": sol.mu,
        "d_bar": sol.d_bar,
        "sigma": sol.sigma,
        "shrunk_sigma": sol.shrunk_sigma,
    });
    let params = json!({ "p": a.p, "data": source, "seed": a.seed });
    let elapsed = start.elapsed().as_secs_f64();
    sink.report(&ExperimentReport::new("closed-form", a.seed, elapsed, &params, &results)?)?;
    println!(
        "d_bar {}, mu {:.6e}, shrunk spectrum {}",
        sol.d_bar,
        sol.mu,
        fmt_spectrum(&sol.shrunk_sigma, 12)
    );
    Ok(())
}

pub fn fig1(a: Fig1Args) -> anyhow::Result<()> {
    let start = Instant::now();
    let sink = Sink::new(&a.output)?;
    let base = if a.desk { Fig1Config::desk(a.seed) } else { Fig1Config::full(a.seed) };
    let cfg = Fig1Config {
        m: a.m.unwrap_or(base.m),
        n: a.n.unwrap_or(base.n),
        data_rank: a.data_rank,
        theta_list: a.theta,
        d_list: a.d,
        iterations: a.iters.unwrap_or(base.iterations),
        tolerance: a.tolerance,
        ema_decay: a.ema_decay.unwrap_or(base.ema_decay),
        schedule: schedule(&a.step, ScheduleKind::InverseTime),
        eps0: a.step.lr,
        ..base
    };
    let r = run_fig1(&cfg)?;
    sink.table(
        "trace.csv",
        "theta,d,iteration,stochastic,ema,deterministic,reference",
        r.cells.iter().flat_map(|c| {
            (0..c.stochastic_trace.len()).map(move |t| {
                format!(
                    "{},{},{},{:e},{:e},{:e},{:e}",
                    c.theta,
                    c.d,
                    t + 1,
                    c.stochastic_trace[t],
                    c.ema_trace[t],
                    c.deterministic_trace[t],
                    c.reference_trace[t]
                )
            })
        }),
    )?;
    sink.table(
        "summary.csv",
        "theta,d,eps0,final_ema,final_deterministic,relative_gap,reference_final,reference_gap,within_tolerance",
        r.cells.iter().map(|c| {
            format!(
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                c.theta,
                c.d,
                c.eps0,
                c.final_ema,
                c.final_deterministic,
                c.relative_gap,
                c.reference_final,
                c.reference_gap,
                c.within_tolerance
            )
        }),
    )?;
    let elapsed = start.elapsed().as_secs_f64();
    sink.report(&ExperimentReport::new("fig1", a.seed, elapsed, &cfg, &r)?)?;
    for c in &r.cells {
        println!(
            "theta {:.2} d {:4}: ema {:.5e} deterministic {:.5e} gap {:.4} {}",
            c.theta,
            c.d,
            c.final_ema,
            c.final_deterministic,
            c.relative_gap,
            if c.within_tolerance { "ok" } else { "OUTSIDE TOLERANCE" }
        );
    }
    println!("max gap {:.4} ({:.1}s)", r.max_relative_gap, elapsed);
    Ok(())
}

pub fn fig3(a: Fig3Args) -> anyhow::Result<()> {
    let start = Instant::now();
    let sink = Sink::new(&a.output)?;
    let base = Fig3Config::standard(a.seed);
    let cfg = Fig3Config {
        data: SyntheticSpec {
            m: a.m,
            n: a.n,
            true_rank: a.rank,
            noise_std: a.noise_std,
            ..base.data
        },
        p: a.p,
        theta_bar: a.theta,
        d_list: a.d,
        iterations: a.iters,
        tail_fraction: a.tail_fraction,
        rank_cutoff: a.rank_cutoff,
        schedule: StepSchedule::InverseTime { t0: a.t0 },
        eps0: a.lr,
        init: match a.init {
            InitKind::Random => Fig3Init::Random,
            InitKind::Svd => Fig3Init::SvdInformed,
        },
        ..base
    };
    let r = run_fig3(&cfg)?;
    if sink.csv {
        let names: Vec<String> = r
            .runs
            .iter()
            .map(|run| match run.dropout {
                DropoutConfig::Fixed { .. } => format!("fixed_d{}", run.d),
                DropoutConfig::Adaptive { .. } => format!("adaptive_d{}", run.d),
            })
            .collect();
        let mut columns: Vec<(&str, &[f64])> = vec![("data", &r.data_spectrum), ("closed_form", &r.closed_form_spectrum)];
        for (name, run) in names.iter().zip(&r.runs) {
            columns.push((name, &run.spectrum));
        }
        write_spectrum_csv(sink.path("spectrum.csv"), &columns)?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    sink.report(&ExperimentReport::new("fig3", a.seed, elapsed, &cfg, &r)?)?;
    println!(
        "closed form: d_bar {}, mu {:.4e}, rank {} (cutoff {:e}); data rank {}",
        r.d_bar,
        r.mu,
        r.closed_form_rank,
        cfg.rank_cutoff,
        numerical_rank(&r.data_spectrum, cfg.rank_cutoff)
    );
    for run in &r.runs {
        println!(
            "{:>8} d {:3} theta {:.4}: rank {:3}, rel distance to A_opt {:.3e}",
            match run.dropout {
                DropoutConfig::Fixed { .. } => "fixed",
                DropoutConfig::Adaptive { .. } => "adaptive",
            },
            run.d,
            run.theta,
            run.numerical_rank,
            run.relative_distance_to_opt
        );
    }
    Ok(())
}

pub fn reconstruct(a: ReconstructArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    let sink = Sink::new(&a.output)?;
    let cfg = ReconstructConfig {
        theta_list: a.theta,
        d: a.d,
        epochs: a.epochs,
        alternating_block: a.block,
        lr: a.lr,
        max_rows: (a.max_rows > 0).then_some(a.max_rows),
        seed: a.seed,
        ..Default::default()
    };
    let r = run_reconstruct(&a.input, &cfg).with_context(|| format!("reconstructing {}", a.input.display()))?;
    sink.table(
        "summary.csv",
        "theta,p,gamma,d_bar,mu,factorization_error,closed_form_error,gap,gap_theta_divided",
        r.runs.iter().map(|run| {
            format!(
                "{},{:e},{:e},{},{:e},{:e},{:e},{:e},{:e}",
                run.theta,
                run.p,
                run.gamma,
                run.d_bar,
                run.mu,
                run.factorization_error,
                run.closed_form_error,
                run.gap,
                run.gap_theta_divided
            )
        }),
    )?;
    let params = json!({ "config": cfg, "input": a.input });
    let elapsed = start.elapsed().as_secs_f64();
    sink.report(&ExperimentReport::new("reconstruct", a.seed, elapsed, &params, &r)?)?;
    println!("{} x {} (from {} rows)", r.rows, r.cols, r.source_rows);
    for run in &r.runs {
        println!(
            "theta {:.2} (p {:.4}, d_bar {}): mse factorization {:.3e}, closed form {:.3e}, gap {:.3e}",
            run.theta, run.p, run.d_bar, run.factorization_error, run.closed_form_error, run.gap
        );
    }
    Ok(())
}

pub fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        m: a.m,
        n: a.n,
        true_rank: a.rank,
        signal_std: a.signal_std,
        noise_std: a.noise_std,
        seed: a.seed,
    };
    let x = generate_synthetic(&spec)?;
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    x.write_csv(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {} x {} matrix to {}", x.rows(), x.cols(), a.out.display());
    Ok(())
}
