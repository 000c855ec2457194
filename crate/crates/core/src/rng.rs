//! Deterministic random streams.
//!
//! Every random draw in the library comes from a ChaCha stream keyed by the
//! master seed plus a path of tags (trial index, purpose, step, member, ...).
//! Streams are independent of scheduling order, so parallel execution gives
//! the same numbers as serial execution.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Purpose tags used to separate streams drawn from the same parent seed.
pub mod tag {
    pub const TRUTH: u64 = 1;
    pub const PRIOR: u64 = 2;
    pub const OBSERVATION: u64 = 3;
    pub const PSEUDO_DATA: u64 = 4;
    pub const TRIAL: u64 = 5;
    pub const CALIBRATION: u64 = 6;
    pub const MEMBER: u64 = 7;
    pub const BATHYMETRY: u64 = 8;
    pub const CURVES: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a tag path.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(seed: u64, tags: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, tags))
}
