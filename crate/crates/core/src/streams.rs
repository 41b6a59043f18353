//! Deterministic per-purpose RNG streams.
//!
//! Every random draw in the engine comes from a stream keyed by
//! `(global seed, tag, indices...)` through a splitmix64-style mixer, so a
//! view, sample, or task can be regenerated in isolation without replaying
//! anything that came before it. Streams are stable within one build of this
//! crate; bit-identical streams across implementations are not a goal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_STANDARD_VIEW: u64 = 1;
pub const TAG_DIFFUSION_VIEW: u64 = 2;
pub const TAG_TASK_PROTOTYPES: u64 = 3;
pub const TAG_TASK_SAMPLES: u64 = 4;
pub const TAG_ENCODER_WEIGHTS: u64 = 5;
pub const TAG_VOCABULARY: u64 = 6;
pub const TAG_PROMPT_INIT: u64 = 7;
pub const TAG_AUDIT: u64 = 8;
pub const TAG_TASK_SHIFT: u64 = 9;

/// splitmix64 finalizer; the avalanche step used to combine stream keys.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collapse `(seed, parts...)` into a single 64-bit stream key.
pub fn stream_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

/// A small, fast, seedable generator for the stream addressed by `parts`.
pub fn stream_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, parts))
}
