//! Deterministic RNG stream derivation.
//!
//! Every stochastic component draws from its own ChaCha stream derived from a
//! root seed plus a small label path. Streams derived this way are independent
//! of evaluation order, so a population generated child-by-child is identical
//! whether children are produced sequentially or by a worker pool.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a child RNG from `seed` and a label path such as
/// `&["pedigree", "gen", "3", "child", "17"]`.
///
/// Uses an FNV-1a style mix over the label bytes; collisions between distinct
/// paths used in this crate are not a practical concern at these stream counts.
pub fn stream(seed: u64, path: &[&str]) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x1000_0000_01b3);
    for part in path {
        for &b in part.as_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
        // separator so ["ab","c"] != ["a","bc"]
        h ^= 0x1f;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&h.to_le_bytes());
    key[16..24].copy_from_slice(&h.rotate_left(31).to_le_bytes());
    key[24..32].copy_from_slice(&(h ^ seed).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Convenience for numeric stream indices.
pub fn stream_idx(seed: u64, label: &str, idx: u64) -> ChaCha8Rng {
    stream(seed, &[label, &idx.to_string()])
}
