//! Seeded random streams.
//!
//! Every random draw in an experiment comes from a stream addressed by a
//! path of integers below the master seed, e.g. `[replication, stage, env]`.
//! The path is folded into a 64-bit seed with SplitMix64 finalizers, and that
//! seed keys a ChaCha8 generator. Distinct paths give unrelated streams, so a
//! result row can be regenerated from `(master_seed, path)` alone, in any
//! order and on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stage tags used as the second path component inside a replication.
pub mod stage {
    pub const PARAMS: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const TEST: u64 = 3;
    pub const STRATEGY: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold a path under `master` into a single seed.
pub fn split_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn substream(master: u64, path: &[u64]) -> Stream {
    Stream::seed_from_u64(split_seed(master, path))
}

pub fn stream(seed: u64) -> Stream {
    Stream::seed_from_u64(seed)
}
