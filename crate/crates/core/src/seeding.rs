//! Platform-independent seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from
//! `derive_seed(master, index, tag)`, so results depend only on the master
//! seed and never on iteration or thread order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_SCENE: u64 = 0x5343_454e;
pub const TAG_REAL: u64 = 0x5245_414c;
pub const TAG_SYNTHETIC: u64 = 0x5359_4e54;
pub const TAG_CORRUPT: u64 = 0x434f_5252;
pub const TAG_SPLIT: u64 = 0x5350_4c54;
pub const TAG_TREE: u64 = 0x5452_4545;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit hash of (master seed, index, stream tag).
pub fn derive_seed(master: u64, index: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ index) ^ tag)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
