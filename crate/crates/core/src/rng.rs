//! Seeded random streams. Every source of randomness is a ChaCha8 generator
//! keyed by the user seed and a fixed stream id, so initialization, shuffling
//! and masking never share draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Training = 2,
    Split = 3,
    Verification = 4,
}

pub fn seeded(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed for ensemble component `stage` (1-based); stage 1 keeps the base seed.
pub fn stage_seed(seed: u64, stage: usize) -> u64 {
    if stage <= 1 {
        seed
    } else {
        seed ^ (stage as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}
