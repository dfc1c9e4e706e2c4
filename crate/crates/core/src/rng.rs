//! Deterministic randomness.
//!
//! Field values are keyed per site by the coordinate vector (not the linear
//! index), so the value at a given coordinate is independent of traversal
//! order and of the torus side. Growing a window therefore extends a field
//! without disturbing the sites already present, which is what the ageing
//! emulation and the macrobox truncation check rely on.
//!
//! Bulk streams (walkers, bootstrap resamples, per-realization seeds) come
//! from ChaCha8 seeded with a SplitMix64-derived key.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function: a bijective mixer with good avalanche.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Combine a running key with one more word.
#[inline]
pub fn mix(key: u64, word: u64) -> u64 {
    splitmix64(key ^ word.wrapping_mul(0xd6e8feb86659fd93))
}

/// Key for a site given the base seed and the coordinate vector.
#[inline]
pub fn site_key(seed: u64, coords: &[i64]) -> u64 {
    let mut k = splitmix64(seed);
    for &c in coords {
        k = mix(k, c as u64);
    }
    k
}

/// Uniform in the open interval (0, 1) from a 64-bit word. 52 bits plus a
/// half-ulp offset: the offset stays exactly representable, so 0 and 1 are
/// excluded even at the extremes.
#[inline]
pub fn u64_to_open_unit(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Standard exponential by inverse transform; strictly positive.
#[inline]
pub fn exponential_from_key(key: u64) -> f64 {
    -u64_to_open_unit(splitmix64(key)).ln()
}

/// Derived substream: ChaCha8 keyed by (seed, stream id). Used for walkers,
/// bootstrap resampling and realization streams.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let a = splitmix64(seed ^ 0x517c_c1b7_2722_0a95);
    let b = mix(a, stream);
    key[..8].copy_from_slice(&a.to_le_bytes());
    key[8..16].copy_from_slice(&b.to_le_bytes());
    key[16..24].copy_from_slice(&splitmix64(b).to_le_bytes());
    key[24..].copy_from_slice(&mix(b, 0x2545_f491_4f6c_dd1d).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Seed for realization `index` of a campaign with the given base seed.
pub fn realization_seed(base_seed: u64, index: usize) -> u64 {
    mix(splitmix64(base_seed), index as u64)
}
