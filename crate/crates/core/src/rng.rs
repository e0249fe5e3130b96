//! Seeded random number generation. Every randomized operation in this crate
//! takes an explicit 64-bit seed and derives a ChaCha stream from it, so runs
//! are reproducible bit-for-bit across platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream for a sub-task (per-epoch shuffles, per-task
/// batching) without correlating it with the parent stream.
pub fn derive(seed: u64, stream: u64) -> ChaCha8Rng {
    let mixed = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(mixed)
}
