//! Seed derivation. Every random stream in a run is a ChaCha8 generator keyed
//! by the run seed and a fixed stream tag, so that streams never overlap and
//! adding a query in one place cannot shift the samples drawn elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags for the independent random sources of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Environment = 1,
    Initialization = 2,
    Noise = 3,
    Optimizer = 4,
    Simulator = 5,
}

pub fn stream(seed: u64, tag: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag as u64);
    rng
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
