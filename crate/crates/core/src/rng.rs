//! Seeded, splittable random streams.
//!
//! Every generator in the crate draws from a ChaCha8 stream selected by an
//! explicit `(seed, name)` pair, so two consumers never share a stream and
//! results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stream for a named consumer under `seed`.
pub fn stream(seed: u64, name: &str) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Indexed sub-stream, e.g. one per device or per pattern.
pub fn substream(seed: u64, name: &str, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(fnv1a(name.as_bytes()) ^ index);
    rng
}
