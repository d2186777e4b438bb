//! Deterministic seed derivation.
//!
//! Every stochastic stage draws from its own stream whose seed is a mix of a
//! parent seed and a small tuple of indices, so results do not depend on
//! evaluation order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` and an ordered list of indices.
pub fn derive(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(parent), |acc, &p| mix64(acc ^ mix64(p)))
}

/// Stream tags for the independent stochastic stages of one split.
pub mod stream {
    pub const SAMPLING: u64 = 1;
    pub const SPSA: u64 = 2;
    pub const SHOTS: u64 = 3;
    pub const THETA_INIT: u64 = 4;
    pub const SUBSET: u64 = 5;
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
