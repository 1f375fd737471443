//! Seeded random streams.
//!
//! Every stochastic stage draws from ChaCha8 seeded with `seed_from_u64`, on a
//! stream id that names the stage. Two stages sharing a seed therefore never
//! see correlated draws, and a stage's draws do not depend on what ran before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier recorded in resolved configs so other implementations can
/// reproduce the sequences.
pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64";

pub type Rng = ChaCha8Rng;

/// Stream ids for each stochastic stage.
pub mod stream {
    pub const KEYFRAMES: u64 = 1;
    pub const SCHEDULE: u64 = 2;
    pub const THRESHOLDS: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const SPLIT: u64 = 7;
    pub const BALANCE: u64 = 8;
    pub const SUBSET: u64 = 9;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
