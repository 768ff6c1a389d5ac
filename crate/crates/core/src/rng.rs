//! Seeding conventions.
//!
//! Every stochastic routine in the crate draws from [`SimRng`], ChaCha with 8
//! rounds as implemented by `rand_chacha`. Its output stream is specified
//! independently of platform and word size, so a seed fixes a trajectory bit
//! for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed of replica `index` under `master`.
///
/// This is the `index + 1`-th output of a SplitMix64 generator started at
/// `master`, so distinct replicas of one master seed never share a stream
/// seed.
pub fn split_seed(master: u64, index: u64) -> u64 {
    mix64(master.wrapping_add(GOLDEN_GAMMA.wrapping_mul(index.wrapping_add(1))))
}
