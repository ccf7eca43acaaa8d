//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! 64-bit value derived by mixing a root seed with a domain tag and indices.
//! Streams never depend on scheduling, so results are identical at any
//! thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a sequence of words.
pub fn derive(seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(mix64(seed), |acc, &w| mix64(acc ^ mix64(w)))
}

/// Stable 64-bit FNV-1a hash, used to key per-item streams by identifier.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Index of the seed-chosen starting element among `n` candidates sorted by
/// ascending identifier. Shared by every greedy selector.
pub fn start_index(seed: u64, n: usize) -> usize {
    assert!(n > 0, "start_index over an empty set");
    rng(seed).random_range(0..n)
}

/// Domain tags for [`derive`].
pub mod tag {
    pub const SPLIT: u64 = 1;
    pub const INIT: u64 = 2;
    pub const PHANTOM: u64 = 3;
    pub const VALIDATION: u64 = 4;
    pub const SELECT: u64 = 5;
    pub const PREDICT: u64 = 6;
    pub const EVAL: u64 = 7;
    pub const BOOTSTRAP: u64 = 8;
    pub const SUBSAMPLE: u64 = 9;
}
