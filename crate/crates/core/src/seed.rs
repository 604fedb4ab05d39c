//! Deterministic seed derivation.
//!
//! Every randomized step derives its own stream from the global seed and the
//! identifiers of the items it works on, so results never depend on the
//! order in which a worker pool happens to schedule items.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG used throughout the crate.
pub type SeededRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `base` with an ordered list of labels into a new 64-bit seed.
pub fn derive_seed<S: AsRef<[u8]>>(base: u64, labels: &[S]) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix64(base);
    for label in labels {
        for &b in label.as_ref() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        // separator so ["ab","c"] and ["a","bc"] differ
        h ^= 0xff;
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

pub fn rng_from_seed(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Shorthand for `rng_from_seed(derive_seed(base, labels))`.
pub fn derived_rng<S: AsRef<[u8]>>(base: u64, labels: &[S]) -> SeededRng {
    rng_from_seed(derive_seed(base, labels))
}
