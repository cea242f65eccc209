//! Seed derivation for independent random substreams.
//!
//! Every random draw in the crate comes from a ChaCha generator keyed by
//! `(seed, purpose, entity, ...)`, so results do not depend on the order in
//! which items are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod purpose {
    pub const CATALOG: u64 = 0x01;
    pub const SELLER: u64 = 0x02;
    pub const RCT: u64 = 0x03;
    pub const ROLLOUT: u64 = 0x04;
    pub const RANDOM_POLICY: u64 = 0x05;
    pub const BOOTSTRAP: u64 = 0x06;
    pub const FOLDS: u64 = 0x07;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit key for a string id (FNV-1a).
pub fn key_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for p in parts {
        h = splitmix64(h ^ p.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    h
}

pub fn substream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}
