//! Seeded, platform-independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-item stream: the base seed XOR the item index.
pub fn derived(seed: u64, index: usize) -> SeededRng {
    seeded(seed ^ index as u64)
}
