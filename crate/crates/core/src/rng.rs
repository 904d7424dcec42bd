//! Deterministic, splittable random streams.
//!
//! Every stochastic stage derives its own ChaCha stream from a master seed,
//! a purpose tag and an index, so examples can be replayed exactly and
//! parallel workers never share a stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// A stream fully determined by (seed, tag, index).
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mut s = [0u8; 32];
    s[..8].copy_from_slice(&seed.to_le_bytes());
    s[8..16].copy_from_slice(&fnv1a(tag.as_bytes()).to_le_bytes());
    s[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(s)
}
