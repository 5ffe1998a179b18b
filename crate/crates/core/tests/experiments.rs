use std::time::Instant;

use dropmf::experiments::{
    generate_synthetic, run_equivalence, run_fig1, run_reconstruct, EquivalenceConfig, ExperimentReport, Fig1Config,
    ReconstructConfig, SyntheticSpec,
};
use dropmf::{svd, DenseMatrix, Error};

#[test]
fn desk_fig1_is_quick_and_reports_every_cell() {
    let cfg = Fig1Config::desk(11);
    let start = Instant::now();
    let r = run_fig1(&cfg).unwrap();
    assert!(start.elapsed().as_secs_f64() < 60.0);
    assert_eq!(r.cells.len(), 15);
    assert!(r.all_within_tolerance, "max gap {}", r.max_relative_gap);
    let report = ExperimentReport::new("fig1", cfg.seed, 0.0, &cfg, &r).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    report.write_json(&path).unwrap();
    let back = ExperimentReport::read_json(&path).unwrap();
    let cells = back.results["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 15);
    for c in cells {
        for key in ["stochastic_trace", "ema_trace", "deterministic_trace"] {
            assert_eq!(c[key].as_array().unwrap().len(), cfg.iterations);
        }
    }
    assert_eq!(back.parameters["iterations"], 2000);
    assert_eq!(back.crate_version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn reconstruct_reads_csv_and_rejects_ragged_input() {
    let dir = tempfile::tempdir().unwrap();
    let x = generate_synthetic(&SyntheticSpec {
        m: 40,
        n: 12,
        true_rank: 3,
        signal_std: 0.4,
        noise_std: 0.01,
        seed: 9,
    })
    .unwrap();
    let path = dir.path().join("x.csv");
    x.write_csv(&path).unwrap();
    assert_eq!(DenseMatrix::read_csv(&path).unwrap(), x);

    let cfg = ReconstructConfig {
        d: 6,
        epochs: 20,
        alternating_block: 10,
        lr: 0.01,
        max_rows: Some(30),
        ..Default::default()
    };
    let r = run_reconstruct(&path, &cfg).unwrap();
    assert_eq!((r.rows, r.cols, r.source_rows), (30, 12, 40));
    assert_eq!(r.runs.len(), 2);
    for run in &r.runs {
        assert!(run.gap.is_finite() && run.factorization_error.is_finite());
        assert!(run.d_bar >= 1 && run.d_bar <= 12);
    }

    let ragged = dir.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2,3\n4,5\n").unwrap();
    assert!(matches!(run_reconstruct(&ragged, &cfg), Err(Error::RaggedRow { .. })));
}

#[test]
fn equivalence_sweep_meets_tolerance() {
    let s = run_equivalence(&EquivalenceConfig::default()).unwrap();
    assert_eq!(s.instances.len(), 200);
    assert!(s.max_relative_error <= 1e-10);
}

#[test]
fn paper_scale_generator() {
    let x = generate_synthetic(&SyntheticSpec::low_rank_plus_noise(0)).unwrap();
    let s = svd(&x).unwrap();
    // Ten signal directions stand clear of the noise floor.
    assert!(s.sigma[9] > 2.0 * s.sigma[10]);
}
