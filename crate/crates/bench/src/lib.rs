//! Shared fixtures for the benchmarks.

use tracereg::rng::substream;
use tracereg::sampling::{generate_dataset, generate_ground_truth};
use tracereg::{Dataset, EnsembleKind, EnsembleSpec, Mat, XiMode};

/// Rank-`r` truth and a noisy dataset of `n` observations.
pub fn fixture(kind: EnsembleKind, d: usize, r: usize, n: usize, seed: u64) -> (Mat, Dataset) {
    let spec = EnsembleSpec::square(kind, d).expect("positive dimension");
    let b = generate_ground_truth(d, d, r, &mut substream(seed, &[0])).expect("r ≤ d");
    let ds = generate_dataset(&spec, &b, n, 1.0, seed).expect("valid fixture");
    (b, ds)
}

pub fn mc(d: usize, n: usize, seed: u64) -> (Mat, Dataset) {
    fixture(EnsembleKind::MatrixCompletion { xi_mode: XiMode::Plain }, d, 2, n, seed)
}

/// Dense square matrix with standard normal-ish entries from a fixed seed.
pub fn dense(d: usize, seed: u64) -> Mat {
    generate_ground_truth(d, d, d, &mut substream(seed, &[1])).expect("full rank")
}
