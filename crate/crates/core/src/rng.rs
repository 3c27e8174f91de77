//! Seed derivation and the counter-based hash behind the interaction tensor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Pure hash of a key and a sequence of counters.
#[inline]
pub fn hash_counters(key: u64, counters: &[u64]) -> u64 {
    let mut h = mix64(key ^ GOLDEN);
    for &c in counters {
        h = mix64(h ^ c.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019));
    }
    h
}

/// Uniform in the open interval (0, 1) from the top 52 bits.
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Standard normal deviate for `(key, counters)` via Box–Muller on two
/// counter-derived uniforms.
pub fn counter_normal(key: u64, counters: &[u64]) -> f64 {
    let h = hash_counters(key, counters);
    let u1 = unit_open(h);
    let u2 = unit_open(mix64(h ^ 0xD1B5_4A32_D192_ED03));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Independent stream for a named purpose under a master seed.
pub fn stream(seed: u64, purpose: &str) -> ChaCha8Rng {
    let tag = purpose
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3));
    ChaCha8Rng::seed_from_u64(hash_counters(seed, &[tag]))
}

/// Seed for the `index`-th child of `seed`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    hash_counters(seed, &[0x5EED, index])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_are_pure() {
        assert_eq!(counter_normal(7, &[1, 2, 3, 4]), counter_normal(7, &[1, 2, 3, 4]));
        assert_ne!(counter_normal(7, &[1, 2, 3, 4]), counter_normal(7, &[1, 2, 4, 3]));
        assert_ne!(counter_normal(7, &[1, 2, 3, 4]), counter_normal(8, &[1, 2, 3, 4]));
    }

    #[test]
    fn unit_open_excludes_endpoints() {
        assert!(unit_open(0) > 0.0);
        assert!(unit_open(u64::MAX) < 1.0);
    }
}
