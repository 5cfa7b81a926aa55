//! Shared fixtures for the criterion benchmarks.

use detlab_core::ensembles::{sample_matrix, AtomDistribution};
use detlab_core::{MatrixSample, SeedSpec};

pub const SIZES: [usize; 2] = [128, 256];

/// A Gaussian `n x n` sample from a fixed stream.
pub fn gaussian_fixture(n: usize) -> MatrixSample {
    sample_matrix(n, &AtomDistribution::gaussian(), 0, SeedSpec::new(7, n as u64)).expect("n > 0")
}

/// A Bernoulli `n x n` sample with the default Gaussian tail block.
pub fn hybrid_fixture(n: usize) -> MatrixSample {
    let tail = detlab_core::ensembles::tail_block_size(n);
    sample_matrix(n, &AtomDistribution::bernoulli(), tail, SeedSpec::new(8, n as u64)).expect("n > 0")
}
