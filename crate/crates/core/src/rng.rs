//! Reproducible random streams.
//!
//! Every consumer of randomness asks for a stream keyed by
//! `(seed, purpose, a, b)`, e.g. `(seed, Sampling, epoch, batch·B + chain)`.
//! Streams are ChaCha8 generators whose key is derived from the seed and
//! purpose and whose stream id is derived from `(a, b)`, so results never
//! depend on the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for; keeps unrelated consumers independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    ChainInit = 2,
    Shuffle = 3,
    Sampling = 4,
    Ais = 5,
    Evaluation = 6,
    Bootstrap = 7,
    Sensitivity = 8,
    Dataset = 9,
    Misc = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, purpose, a, b)`.
pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> StreamRng {
    let key = splitmix64(seed ^ splitmix64(purpose as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(splitmix64(splitmix64(a) ^ b.rotate_left(17)));
    rng
}
