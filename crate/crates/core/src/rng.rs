//! Reproducible random streams.
//!
//! All samplers take an explicit RNG. A master seed plus a stream counter
//! yields independent substreams, so independent draws (or replicates) can be
//! dispatched to workers in any order and still reproduce bit-identical
//! output for a fixed master seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The RNG used throughout the engine.
pub type Rng = ChaCha12Rng;

/// Root stream for a master seed.
pub fn master(seed: u64) -> Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Independent substream `stream` of master seed `seed`.
///
/// Uses the ChaCha counter-based stream mechanism: every `(seed, stream)`
/// pair indexes a disjoint keystream, so substreams never overlap.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
