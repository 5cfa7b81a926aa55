//! Per-trial random streams.
//!
//! Every trial draws from its own ChaCha8 stream whose 64-bit seed is a pure
//! function of `(master_seed, trial_index)`. The mixing function is the
//! SplitMix64 output function applied to the SplitMix64 state reached after
//! `trial_index + 1` increments from `master_seed`:
//!
//! ```text
//! z  = master_seed + 0x9E3779B97F4A7C15 * (trial_index + 1)   (mod 2^64)
//! z  = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z  = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! seed = z ^ (z >> 31)
//! ```
//!
//! Because the stream depends only on the index, serial and parallel
//! schedules produce bit-identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The SplitMix64 finalizer.
pub fn splitmix64_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed and an index into a stream seed.
pub fn mix(master_seed: u64, index: u64) -> u64 {
    splitmix64_finalize(master_seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}

pub type TrialRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        SeedSpec {
            master_seed,
            trial_index,
        }
    }

    pub fn stream_seed(&self) -> u64 {
        mix(self.master_seed, self.trial_index)
    }

    pub fn rng(&self) -> TrialRng {
        ChaCha8Rng::seed_from_u64(self.stream_seed())
    }

    /// A seed for an independent family of streams, labelled by `tag`.
    ///
    /// Used to separate e.g. the two arms of a comparison or different
    /// matrix sizes that share one master seed.
    pub fn family(master_seed: u64, tag: u64) -> u64 {
        mix(master_seed ^ 0x6A09_E667_F3BC_C908, tag)
    }

    /// The `j`-th sub-stream of this trial.
    pub fn substream(&self, j: u64) -> SeedSpec {
        SeedSpec::new(self.stream_seed(), j)
    }
}

/// Maps `f` over trial indices `0..count` on the current rayon pool and
/// returns results in index order.
pub fn par_map_trials<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count as u64).into_par_iter().map(f).collect()
}
