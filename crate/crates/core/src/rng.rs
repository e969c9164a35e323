//! Deterministic seed derivation for independent random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream seeded through
//! [`mix`], so substreams are stable across runs, platforms, and the order in
//! which components are constructed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines a base seed with an arbitrary list of stream coordinates.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut acc = splitmix(seed);
    for &p in parts {
        acc = splitmix(acc ^ p.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    acc
}

/// Stable 64-bit hash of a tag string (FNV-1a).
pub fn tag_hash(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Independent stream for `(seed, tag, coords...)`.
pub fn stream(seed: u64, tag: &str, coords: &[u64]) -> ChaCha8Rng {
    let mut parts = vec![tag_hash(tag)];
    parts.extend_from_slice(coords);
    ChaCha8Rng::seed_from_u64(mix(seed, &parts))
}
