//! Seed derivation for reproducible, independent random streams.
//!
//! Every random stream in the crate is a [`SimRng`] seeded from a 64-bit master
//! seed plus a path of labels (replica index, purpose, ...). Streams never depend
//! on wall-clock time or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purposes used when splitting a replica's seed into sub-streams.
pub mod purpose {
    pub const TOPOLOGY: u64 = 1;
    pub const WORKLOAD: u64 = 2;
    pub const SIMULATION: u64 = 3;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `labels` into `seed`; distinct label paths give unrelated seeds.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(seed), |acc, &l| splitmix64(acc ^ splitmix64(l)))
}

pub fn rng_from(seed: u64, labels: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, labels))
}
