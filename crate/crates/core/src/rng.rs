//! Seeded, splittable random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream `stream` derived from a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A child seed for sub-task `index`, taken from a stream reserved for seed derivation so
/// that it never coincides with the chain streams `0, 1, ...` of the same master seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed, (1 << 40) | index).next_u64()
}
