//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha`) seeded from a 64-bit
//! value; draws go through `rand`'s uniform range sampling. Child seeds are
//! derived with a SplitMix64 chain so that neighbor slots can be sampled
//! independently and in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into one seed: `s = splitmix64(s + GAMMA + part)` per part,
/// starting from `s = 0`.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0u64, |s, &p| splitmix64(s.wrapping_add(GOLDEN_GAMMA).wrapping_add(p)))
}

/// A seeded random stream with the draws the mutation operators need.
#[derive(Debug, Clone)]
pub struct SearchRng(ChaCha8Rng);

impl SearchRng {
    pub fn from_seed(seed: u64) -> Self {
        SearchRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: i64, hi: i64) -> i64 {
        self.0.random_range(lo..=hi)
    }

    /// Uniform real in `lo..=hi`.
    pub fn real_inclusive(&mut self, lo: f64, hi: f64) -> f64 {
        if lo >= hi {
            return lo;
        }
        self.0.random_range(lo..=hi)
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> Option<&'a T> {
        if items.is_empty() {
            None
        } else {
            Some(&items[self.index(items.len())])
        }
    }

    /// Two distinct uniform indices in `0..n`; `n` must be at least 2.
    pub fn distinct_pair(&mut self, n: usize) -> (usize, usize) {
        let a = self.index(n);
        let mut b = self.index(n - 1);
        if b >= a {
            b += 1;
        }
        (a, b)
    }
}

/// Rounds half away from zero to `decimals` places.
pub fn quantize(value: f64, decimals: u32) -> f64 {
    let scale = libm::pow(10.0, f64::from(decimals));
    libm::round(value * scale) / scale
}
