//! Seed derivation. Every stochastic step takes an explicit generator derived
//! from the run seed plus a purpose tag, so runs are reproducible regardless
//! of the order in which independent stages execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub fn rng_for(seed: u64, parts: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

/// Purpose tags for [`rng_for`].
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const EPOCH: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const MRR: u64 = 6;
    pub const SYNTH_WORLD: u64 = 7;
    pub const SYNTH_USER: u64 = 8;
    pub const RANDOM_SCORER: u64 = 9;
}
