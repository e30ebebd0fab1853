//! Counter-based seed derivation.
//!
//! Every random draw in the pipeline comes from a generator seeded by a pure
//! function of `(global seed, stream, indices...)`, so results do not depend on
//! iteration order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named streams so that unrelated consumers never share a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Shuffle = 1,
    Augment = 2,
    Init = 3,
    QueueWarm = 4,
    Synthetic = 5,
    Eval = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &p in parts {
        h = splitmix64(h ^ p);
    }
    h
}

pub fn stream_rng(seed: u64, stream: Stream, parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream, parts))
}
