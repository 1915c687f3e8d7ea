//! Seeded random streams.
//!
//! Every stochastic operation draws from a ChaCha8 generator whose seed is
//! derived from the run seed plus a list of stream identifiers, mixed with
//! SplitMix64. Two calls with the same `(seed, stream)` see identical draws
//! regardless of the order other streams are consumed in.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of stream identifiers.
pub fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    stream
        .iter()
        .fold(splitmix64(seed), |acc, &s| splitmix64(acc ^ splitmix64(s)))
}

pub fn stream(seed: u64, ids: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, ids))
}

/// Stream tags so that different subsystems never share draws.
pub mod tag {
    pub const IMAGE: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const FOLD: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const PLAN: u64 = 7;
    pub const RATERS: u64 = 8;
    pub const RANGE_TEST: u64 = 9;
    pub const SEARCH: u64 = 10;
    pub const MODEL: u64 = 11;
}
