use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dropmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dropmf")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dropmf(args);
    assert!(
        out.status.success(),
        "dropmf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn generate_then_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("data/x.csv");
    let xs = x.to_str().unwrap();
    ok(&["generate", "--m", "20", "--n", "15", "--rank", "3", "--seed", "4", "--out", xs]);
    let rows = csv_rows(&x);
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r.len() == 15));

    let out = dir.path().join("cf");
    let stdout = ok(&[
        "closed-form",
        "--input",
        xs,
        "--p",
        "0.8",
        "--save-matrix",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("d_bar"));
    let spectrum = csv_rows(&out.join("spectrum.csv"));
    assert_eq!(spectrum[0], ["index", "data", "closed_form"]);
    assert_eq!(spectrum.len(), 16);
    assert_eq!(csv_rows(&out.join("a_opt.csv")).len(), 20);
    let r = report(&out);
    assert_eq!(r["experiment"], "closed-form");
    let d_bar = r["results"]["d_bar"].as_u64().unwrap();
    assert!((1..=15).contains(&d_bar));
}

#[test]
fn train_writes_traces_and_factors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train");
    ok(&[
        "train", "--m", "12", "--n", "10", "--rank", "2", "--d", "6", "--p", "0.7", "--iters", "300", "--out",
        out.to_str().unwrap(),
    ]);
    let trace = csv_rows(&out.join("trace.csv"));
    assert_eq!(trace[0], ["iteration", "stochastic", "ema", "deterministic"]);
    assert_eq!(trace.len(), 301);
    assert_eq!(csv_rows(&out.join("u.csv")).len(), 12);
    assert_eq!(csv_rows(&out.join("v.csv")).len(), 10);
    let r = report(&out);
    let det = r["results"]["deterministic_trace"].as_array().unwrap();
    assert_eq!(det.len(), 300);
    assert!(det[299].as_f64().unwrap() < det[0].as_f64().unwrap());
}

#[test]
fn train_is_reproducible_from_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "train", "--m", "8", "--n", "8", "--rank", "2", "--d", "4", "--theta", "0.6", "--iters", "200", "--seed", "5",
            "--format", "csv", "--out", out.to_str().unwrap(),
        ]);
        assert!(!out.join("report.json").exists());
        fs::read_to_string(out.join("trace.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn deterministic_training_has_no_stochastic_noise() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gd");
    ok(&[
        "train", "--m", "8", "--n", "8", "--rank", "2", "--d", "4", "--theta", "0.5", "--iters", "100", "--deterministic",
        "--schedule", "constant", "--format", "json", "--out", out.to_str().unwrap(),
    ]);
    assert!(!out.join("trace.csv").exists());
    let r = report(&out);
    let det = r["results"]["deterministic_trace"].as_array().unwrap();
    let vals: Vec<f64> = det.iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
}

#[test]
fn check_equivalence_small_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq");
    let stdout = ok(&["check-equivalence", "--instances", "25", "--max-d", "8", "--out", out.to_str().unwrap()]);
    assert!(stdout.starts_with("25 instances"));
    let rows = csv_rows(&out.join("equivalence.csv"));
    assert_eq!(rows.len(), 26);
    for row in &rows[1..] {
        assert!(row[6].parse::<f64>().unwrap() <= 1e-10);
    }
}

#[test]
fn small_fig1_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1");
    ok(&[
        "fig1", "--m", "10", "--n", "10", "--data-rank", "12", "--theta", "0.5,0.9", "--d", "4,8", "--iters", "300",
        "--ema-decay", "0.98", "--out", out.to_str().unwrap(),
    ]);
    let summary = csv_rows(&out.join("summary.csv"));
    assert_eq!(summary.len(), 5);
    assert_eq!(summary[0][5], "relative_gap");
    let trace = csv_rows(&out.join("trace.csv"));
    assert_eq!(trace.len(), 1 + 4 * 300);
    assert_eq!(report(&out)["parameters"]["ema_decay"], 0.98);
}

#[test]
fn small_fig3_spectra() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3");
    let stdout = ok(&[
        "fig3", "--m", "15", "--n", "12", "--rank", "2", "--d", "4", "--iters", "2000", "--init", "svd", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("adaptive") && stdout.contains("fixed"));
    let spectrum = csv_rows(&out.join("spectrum.csv"));
    assert_eq!(spectrum[0], ["index", "data", "closed_form", "fixed_d4", "adaptive_d4"]);
    assert_eq!(spectrum.len(), 13);
    // A width-4 product has at most four nonzero singular values.
    let sigma1: f64 = spectrum[1][3].parse().unwrap();
    for row in &spectrum[5..] {
        assert!(row[3].parse::<f64>().unwrap() <= 1e-10 * sigma1);
    }
}

#[test]
fn reconstruct_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let x = dir.path().join("x.csv");
    let xs = x.to_str().unwrap();
    ok(&["generate", "--m", "50", "--n", "10", "--rank", "3", "--signal-std", "0.5", "--out", xs]);
    let out = dir.path().join("rec");
    let stdout = ok(&[
        "reconstruct", "--input", xs, "--d", "5", "--epochs", "10", "--block", "5", "--lr", "0.01", "--max-rows",
        "0", "--out", out.to_str().unwrap(),
    ]);
    assert!(stdout.starts_with("50 x 10 (from 50 rows)"));
    let summary = csv_rows(&out.join("summary.csv"));
    assert_eq!(summary.len(), 3);
    assert_eq!(summary[1][0], "0.5");
    assert_eq!(summary[2][0], "0.8");
}

#[test]
fn rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();

    let both = dropmf(&["train", "--theta", "0.5", "--p", "0.5", "--out", o]);
    assert_eq!(both.status.code(), Some(2));

    let bad_theta = dropmf(&["train", "--theta", "1.5", "--iters", "1", "--out", o]);
    assert!(!bad_theta.status.success());
    assert!(String::from_utf8_lossy(&bad_theta.stderr).contains("1.5"));

    let missing = dropmf(&["reconstruct", "--input", dir.path().join("nope.csv").to_str().unwrap(), "--out", o]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "1,2\n3\n").unwrap();
    let r = dropmf(&["closed-form", "--input", ragged.to_str().unwrap(), "--out", o]);
    assert!(!r.status.success());

    let p0 = dropmf(&["closed-form", "--m", "5", "--n", "5", "--rank", "1", "--p", "0", "--out", o]);
    assert!(!p0.status.success());
}
