//! Seed derivation for independent, reproducible random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed of child `index` under `root`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    splitmix64(root ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Random stream of child `index` under `root`.
pub fn stream(root: u64, index: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(root, index))
}
