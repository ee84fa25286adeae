//! Reproducible random streams: stream `i` of seed `s` is a ChaCha8 generator
//! keyed by `s` with stream id `i`, so trajectory farms never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream id reserved for the initial configuration of trajectory `i`.
pub fn initial_stream(i: u64) -> u64 {
    2 * i
}

/// Stream id reserved for the dynamics of trajectory `i`.
pub fn dynamics_stream(i: u64) -> u64 {
    2 * i + 1
}
