//! Seed splitting for reproducible, order-independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream used throughout the simulator.
pub type SimRng = ChaCha8Rng;

/// Independent stream `stream` derived from `seed`.
///
/// Streams with different indices never overlap, so work split across
/// threads by stream index reproduces the serial result exactly.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
