//! Seed derivation for schedule-independent random streams.
//!
//! Every random draw in a run is keyed by the run seed plus a short path of
//! integers (frame index, stream tag, ...). The derived seed feeds a fresh
//! ChaCha8 generator, so frame `n` sees the same numbers no matter which
//! worker produces it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used by the simulator.
pub mod tag {
    pub const AMPLITUDES: u64 = 0x414d_504c;
    pub const SCREENS: u64 = 0x5343_524e;
    pub const DETECTOR_SCREENS: u64 = 0x4445_5453;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
