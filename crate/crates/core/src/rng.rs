//! Deterministic, splittable random streams.
//!
//! Every consumer of randomness derives its own generator from the run seed and a
//! stream tag, so adding draws in one subsystem never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract; do not renumber.
pub mod stream {
    pub const WORKLOAD: u64 = 1;
    pub const REPLICAS: u64 = 2;
    pub const FAILURES: u64 = 3;
    pub const SLOW_NODES: u64 = 4;
    pub const ATTEMPT: u64 = 5;
    pub const CV: u64 = 6;
    pub const TRAIN: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with an ordered list of keys into a new 64-bit seed.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream_rng(seed: u64, keys: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, keys))
}
