//! Seed derivation.
//!
//! Every stochastic operation takes an explicit `u64` seed and drives a
//! `ChaCha8Rng`. Per-item seeds (cache entries, noise realisations, PPC
//! draws) are derived from a master seed and an item index with
//! [`derive`]:
//!
//! ```text
//! seed_i = splitmix64(master + (i + 1) * 0x9E3779B97F4A7C15)
//! ```
//!
//! where `splitmix64` is the standard finalizer (xor-shift 30/27/31 with
//! multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`) and all
//! arithmetic wraps modulo 2^64.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` under `master`.
pub fn derive(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for item `index` under `master`.
pub fn rng_for(master: u64, index: u64) -> ChaCha8Rng {
    rng(derive(master, index))
}
