//! Counter-based seed derivation, independent of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one 64-bit seed.
pub fn derive_seed(base_seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(base_seed), |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Stable 64-bit tag of a string (FNV-1a).
pub fn tag(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for one trial of one sweep point.
pub fn trial_seed(base_seed: u64, experiment: &str, point: usize, variant: usize, trial: usize) -> u64 {
    derive_seed(base_seed, &[tag(experiment), point as u64, variant as u64, trial as u64])
}

pub fn trial_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
