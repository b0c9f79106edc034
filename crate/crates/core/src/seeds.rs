//! One top-level seed, split into independent ChaCha streams per subsystem.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Clustering,
    Warmup,
    Selection,
    Learner,
    Shuffle,
    Quality,
    Training,
}

impl Subsystem {
    fn stream(self) -> u64 {
        match self {
            Subsystem::Clustering => 1,
            Subsystem::Warmup => 2,
            Subsystem::Selection => 3,
            Subsystem::Learner => 4,
            Subsystem::Shuffle => 5,
            Subsystem::Quality => 6,
            Subsystem::Training => 7,
        }
    }
}

pub fn subsystem_rng(seed: u64, which: Subsystem) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.stream());
    rng
}

/// A derived `u64` seed for APIs that take a plain seed rather than an RNG.
pub fn subsystem_seed(seed: u64, which: Subsystem) -> u64 {
    use rand::RngCore;
    subsystem_rng(seed, which).next_u64()
}
