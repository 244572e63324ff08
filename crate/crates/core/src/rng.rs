//! Seedable, splittable random streams.
//!
//! Every stochastic operation takes an explicit generator. Independent
//! purposes within one run (initialisation, sampling, dropout, noise) draw
//! from distinct ChaCha streams of the same seed so that changing how much
//! randomness one purpose consumes never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers used across the crate.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SAMPLING: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const FEATURE_NOISE: u64 = 4;
    pub const EDGE_NOISE: u64 = 5;
    pub const NEGATIVES: u64 = 6;
    pub const PARTITION: u64 = 7;
    pub const SYNTH: u64 = 8;
    pub const SHUFFLE: u64 = 9;
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
