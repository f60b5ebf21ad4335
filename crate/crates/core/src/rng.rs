//! Named, seed-derived random streams.
//!
//! Every random draw in a run comes from a [`ChaCha8Rng`] whose seed is a
//! mix of the run seed, a [`Stream`] tag and up to three coordinates
//! (episode, slot, vehicle). Two runs with the same seed therefore see the
//! same draws no matter how per-vehicle work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tag for a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Mobility = 2,
    Channel = 3,
    TrueTime = 4,
    Agent = 5,
    SslData = 6,
    SslLocal = 7,
    SslRsu = 8,
    SslEval = 9,
    Dataset = 10,
    Probe = 11,
    Reset = 12,
    Evaluation = 13,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit mix of the seed and stream coordinates.
pub fn stream_id(seed: u64, stream: Stream, a: u64, b: u64, c: u64) -> u64 {
    let mut h = splitmix64(seed);
    for word in [stream as u64, a, b, c] {
        h = splitmix64(h ^ word);
    }
    h
}

pub fn stream(seed: u64, stream: Stream, a: u64, b: u64, c: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(stream_id(seed, stream, a, b, c))
}
