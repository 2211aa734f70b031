//! Deterministic random streams derived from a master seed.
//!
//! Every stream is addressed by `(master, tag, index)` so the draws of one
//! unit of work never depend on how many others ran before it or on which
//! thread.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Stream tags.
pub mod tag {
    pub const PARTITION: u64 = 1;
    pub const ITERATION: u64 = 2;
    pub const REPLICATION_DATA: u64 = 3;
    pub const REPLICATION_JACKKNIFE: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of substream `(tag, index)` under `master`.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ tag) ^ index)
}

pub fn stream(master: u64, tag: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, tag, index))
}
