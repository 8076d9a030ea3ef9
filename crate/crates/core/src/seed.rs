//! Deterministic seed derivation.
//!
//! Every random quantity in a run is derived from the single scenario seed
//! through a counter-based split: `derive(seed, domain, index)` mixes the
//! root seed, a domain label and an index with splitmix64 steps. Parallel
//! trials therefore draw from disjoint, reproducible streams regardless of
//! scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn hash_label(label: &str) -> u64 {
    // FNV-1a; labels are short static strings.
    let mut h = 0xcbf29ce484222325u64;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive a child seed from `(root, domain, index)`.
pub fn derive(root: u64, domain: &str, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ hash_label(domain)).wrapping_add(index))
}

/// Construct a deterministic RNG for `(root, domain, index)`.
pub fn rng(root: u64, domain: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, domain, index))
}
