//! Counter-based seed derivation.
//!
//! One global seed fans out into independent streams: the seed for stream
//! `(stage, index)` is `mix(mix(global ^ mix(stage)) ^ mix(index + 1))` where
//! `mix` is the SplitMix64 finalizer. Each stream drives its own ChaCha8 generator,
//! so results never depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(global: u64, stage: u64, index: u64) -> u64 {
    mix(mix(global ^ mix(stage)) ^ mix(index.wrapping_add(1)))
}

pub fn stream(global: u64, stage: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(global, stage, index))
}

/// Stable stage identifier from a label.
pub fn stage_id(label: &str) -> u64 {
    // FNV-1a
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
