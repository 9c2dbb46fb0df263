//! Every random stream derives from one user seed. Stream `t` of seed `s`
//! is `splitmix64(s + (t + 1) * 0x9E3779B97F4A7C15)`; nested streams apply
//! the rule repeatedly.

pub const MODEL_INIT: u64 = 1;
pub const TRAIN_EPOCH: u64 = 2;
pub const VALIDATION: u64 = 3;
pub const SPLIT: u64 = 4;
pub const DESIGN: u64 = 5;
pub const SIMULATION: u64 = 6;

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `derive_seed` applied along a path of stream ids.
pub fn derive_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &t| derive_seed(s, t))
}
