//! Seed derivation and counter-based noise.
//!
//! Sequential randomness comes from `ChaCha8Rng`. Sample-level noise uses a
//! stateless hash of `(key, index)` so any sample of a multi-hour stream can
//! be evaluated without generating its predecessors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and a list of tags.
pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(mix64(parent ^ GOLDEN), |acc, &t| mix64(acc ^ mix64(t.wrapping_add(GOLDEN))))
}

pub fn chacha(parent: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, tags))
}

/// Uniform value in `[-1, 1)` for sample `index` of the stream keyed by `key`.
#[inline]
pub fn hash_uniform(key: u64, index: u64) -> f64 {
    let bits = mix64(key ^ index.wrapping_mul(GOLDEN)) >> 11;
    (bits as f64) * (2.0 / (1u64 << 53) as f64) - 1.0
}
