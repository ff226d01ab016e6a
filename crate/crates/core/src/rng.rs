//! Seeded random source with a fixed algorithm so noise sweeps and
//! synthetic datasets can be reproduced.
//!
//! Stream: ChaCha8 seeded via `seed_from_u64`; sampling goes through `rand`
//! and `rand_distr` at the versions pinned in `Cargo.lock`.

use rand::seq::{index, SliceRandom};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64 via rand 0.10 + rand_distr 0.6";

pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random()
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        self.0.random_range(lo..hi)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        self.0.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }

    pub fn coin(&mut self) -> bool {
        self.0.random_bool(0.5)
    }

    /// `count` distinct indices from `0..n`.
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        index::sample(&mut self.0, n, count.min(n)).into_vec()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.0);
    }
}

/// SplitMix64 finalizer, used to derive independent per-task seeds.
pub fn mix_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut z = seed;
    for p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(*p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
