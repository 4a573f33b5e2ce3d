//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha8 stream derived from
//! the run seed, so enabling one failure model never shifts the sequence seen
//! by another component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Named sub-streams of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Network = 1,
    Churn = 2,
    Sampling = 3,
    DataShuffle = 4,
    Evaluation = 5,
    Assignment = 6,
    Baseline = 7,
    Cosine = 8,
    Reference = 9,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    indexed_stream(seed, which as u64, 0)
}

/// Stream `which`, member `index`; used for per-model streams of a population.
pub fn indexed_stream(seed: u64, which: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which << 40 | index);
    rng
}
