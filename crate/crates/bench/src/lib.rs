//! Fixtures shared by the kernel benchmarks.

use dropmf::experiments::{generate_synthetic, SyntheticSpec};
use dropmf::{DenseMatrix, FactorPair, RngState};

/// An `n×n` low-rank-plus-noise target with factors of width `d`.
pub fn problem(n: usize, d: usize, seed: u64) -> (DenseMatrix, FactorPair) {
    let x = generate_synthetic(&SyntheticSpec {
        m: n,
        n,
        true_rank: (n / 10).max(1),
        signal_std: 0.1,
        noise_std: 0.01,
        seed,
    })
    .expect("valid synthetic spec");
    let mut rng = RngState::new(seed).child(1);
    let u = rng.gaussian_matrix(n, d, 0.1);
    let v = rng.gaussian_matrix(n, d, 0.1);
    (x, FactorPair::new(u, v).expect("matching widths"))
}
