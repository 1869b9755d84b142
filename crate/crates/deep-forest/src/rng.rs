//! Deterministic seed derivation.
//!
//! Every randomized stage (fold shuffles, per-tree bootstraps, per-node
//! feature draws) owns a seed derived from its parent's seed and a fixed
//! stream tag, so results are reproducible and independent of execution
//! order across threads.

use rand::rngs::SmallRng;
use rand::SeedableRng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a stream tag into a new seed.
pub fn mix(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

/// RNG for one derived stream.
pub fn stream_rng(seed: u64, stream: u64) -> SmallRng {
    SmallRng::seed_from_u64(mix(seed, stream))
}
