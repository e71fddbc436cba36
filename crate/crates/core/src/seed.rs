//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a master seed plus a path of integer tags, so results do not
//! depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive a child seed from `seed` and a tag.
pub fn derive(seed: u64, tag: u64) -> u64 {
    splitmix(splitmix(seed) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used by the experiment loop and the selection pipelines.
pub mod tag {
    pub const SPLIT: u64 = 1;
    pub const SIMULATE: u64 = 2;
    pub const BOOST: u64 = 3;
    pub const REGULAR: u64 = 4;
    pub const SURROGATE_L1_GEN: u64 = 5;
    pub const SURROGATE_L1_CV: u64 = 6;
    pub const SURROGATE_L2_GEN: u64 = 7;
    pub const SURROGATE_L2_CV: u64 = 8;
    pub const NESTED: u64 = 9;
}
