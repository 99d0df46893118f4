//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! run seed and a fixed stream id, so adding draws in one place never shifts
//! the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod streams {
    pub const VISUAL_INIT: u64 = 1;
    pub const TEXT_INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const SPARSITY: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const CORRUPT: u64 = 7;
    pub const REDUNDANT: u64 = 8;
    pub const SURVEY: u64 = 9;
    pub const CBM_INIT: u64 = 10;
    pub const DATA_BASE: u64 = 1 << 32;
}

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
