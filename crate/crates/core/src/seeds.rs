//! Counter-based seed derivation.
//!
//! Every random stream in an experiment is addressed by a base seed plus a
//! path of labels and counters, so any trial or team can be regenerated on its
//! own without replaying the streams that precede it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives a child seed from `base` and a counter.
pub fn child(base: u64, k: u64) -> u64 {
    splitmix64(splitmix64(base) ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Derives a child seed from `base` and a named stream.
pub fn named(base: u64, label: &str) -> u64 {
    child(base, label_hash(label))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
