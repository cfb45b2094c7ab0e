//! Labeled random streams derived from one master seed.
//!
//! Each purpose draws from its own ChaCha stream, so changing how many
//! values one purpose consumes never shifts another purpose's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Topology = 1,
    EdgeWeights = 2,
    AlphaBetaWeights = 3,
    SubStates = 4,
    Noise = 5,
    Trials = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
