//! Seed handling. Every stochastic component derives its own stream from one
//! root seed so that runs are reproducible component by component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer applied to `seed` mixed with a stream id.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, stream))
}

/// Stream ids used across the crate.
pub mod streams {
    pub const CHARACTERISTICS: u64 = 1;
    pub const ATTRIBUTES: u64 = 2;
    pub const CHOICES: u64 = 3;
    pub const SPLIT: u64 = 10;
    pub const INIT: u64 = 20;
    pub const SHUFFLE: u64 = 21;
    pub const DRAWS: u64 = 30;
}
