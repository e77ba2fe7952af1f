//! Counter-based seed derivation. Every random draw in a run comes from a
//! stream keyed by (run seed, purpose, key), so thread scheduling and
//! iteration order cannot perturb results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one 64-bit key.
pub fn derive(seed: u64, words: &[u64]) -> u64 {
    words.iter().fold(mix64(seed), |acc, &w| mix64(acc ^ w))
}

pub fn stream(seed: u64, words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, words))
}

/// Uniform draw in [0, 1) from a hashed key, for one-off decisions.
pub fn unit_f64(seed: u64, words: &[u64]) -> f64 {
    (derive(seed, words) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub mod purpose {
    pub const PLACEMENT: u64 = 1;
    pub const PROFILE: u64 = 2;
    pub const SUBSET: u64 = 3;
    pub const SEPARATION: u64 = 4;
    pub const TRAINING: u64 = 5;
    pub const VICSEK: u64 = 6;
    pub const HOLDOUT: u64 = 7;
}
