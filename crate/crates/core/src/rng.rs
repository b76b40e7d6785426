//! Seeded generators. Every stochastic routine takes `&mut SimRng` so a run is a
//! deterministic function of its seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream used for the draws of the algorithm itself.
pub const ALGORITHM_STREAM: u64 = 0;
/// Stream used to pick the reported output iterate.
pub const OUTPUT_STREAM: u64 = 1;

/// Generator for `(seed, stream)`. ChaCha is counter based, so distinct streams never
/// overlap and the draws of one stream do not depend on how many draws another made.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn seeded(seed: u64) -> SimRng {
    stream_rng(seed, ALGORITHM_STREAM)
}
