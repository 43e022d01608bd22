//! Seeded random streams.
//!
//! Every random draw in a run comes from ChaCha8 (`rand_chacha` 0.9) seeded
//! with the run's 64-bit seed. Independent consumers get independent stream
//! ids on the same key, so turning one consumer on or off never shifts the
//! draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RunRng = ChaCha8Rng;

/// Stream ids. Changing any of these changes every reproduced result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    NeighborSampling = 3,
    VirtualDirection = 4,
    AdversarialDropout = 5,
    Generator = 6,
    Attack = 7,
}

pub fn stream(seed: u64, stream: Stream) -> RunRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
