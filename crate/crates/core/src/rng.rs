//! Counter-based random streams.
//!
//! Every consumer of randomness derives its generator from a `(seed, stream)`
//! pair, so results never depend on evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers used inside a single trial.
pub mod streams {
    pub const TRAIN: u64 = 0;
    pub const TEST: u64 = 1;
    pub const PROBE: u64 = 2;
    pub const LEARNER: u64 = 3;
    pub const PAIRS: u64 = 4;
}

/// A generator keyed by `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A generator keyed by `(seed, stream, substream)`, e.g. `(seed, PROBE, cell)`.
pub fn substream(seed: u64, stream: u64, sub: u64) -> ChaCha8Rng {
    // splitmix64 finalizer keeps nearby (stream, sub) pairs far apart
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(z);
    rng.set_stream(sub);
    rng
}
