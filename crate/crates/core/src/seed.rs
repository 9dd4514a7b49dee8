//! Deterministic sub-seed derivation.
//!
//! Every random decision in the pipeline is drawn from a generator seeded by
//! `derive_seed(base, &[stream, index, ...])`, so any single decision can be
//! regenerated without replaying the ones before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags separating independent uses of the same base seed.
pub mod stream {
    pub const PAIR: u64 = 0x5041_4952;
    pub const BATCH_ORDER: u64 = 0x4f52_4452;
    pub const DROPOUT: u64 = 0x4452_4f50;
    pub const CROP: u64 = 0x4352_4f50;
    pub const INIT: u64 = 0x494e_4954;
    pub const HEAD_INIT: u64 = 0x4845_4144;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const SVM: u64 = 0x0053_564d;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(base: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, parts))
}
