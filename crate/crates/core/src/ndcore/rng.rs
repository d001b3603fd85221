//! Seeded randomness.
//!
//! Every stream is ChaCha8 (`rand_chacha::ChaCha8Rng`) keyed through
//! `SeedableRng::seed_from_u64`. Derived streams mix a base seed with a path
//! of tags through SplitMix64, so a draw never depends on how many draws some
//! unrelated component made before it. Integer ranges use Lemire's
//! multiply-shift rejection method, uniform floats take the top 53 bits, and
//! normals use the Box-Muller transform. None of these depend on platform or
//! thread count.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Tags are hashed in their own domain so that a tag equal to the seed does
/// not cancel it.
const TAG_DOMAIN: u64 = 0xD1B5_4A32_D192_ED03;

/// Hash of a seed and a path of tags.
pub fn mix_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &t| {
        splitmix64(acc.wrapping_add(splitmix64(t ^ TAG_DOMAIN)))
    })
}

/// Stream tags used across the crate.
pub mod stream {
    pub const MASK: u64 = 1;
    pub const WEIGHTS: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const GROW: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const SNIP: u64 = 6;
    pub const DATA: u64 = 7;
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream identified by `seed` and a tag path.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        Self::new(mix_seed(seed, path))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n). `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let mut m = (self.next_u64() as u128) * (n as u128);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = (self.next_u64() as u128) * (n as u128);
            }
        }
        (m >> 64) as u64
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct draws from `pool` (partial Fisher-Yates), returned sorted.
    pub fn sample_from(&mut self, pool: &[usize], k: usize) -> Vec<usize> {
        assert!(k <= pool.len(), "sample of {k} from {}", pool.len());
        let mut pool = pool.to_vec();
        for i in 0..k {
            let j = i + self.below((pool.len() - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool.sort_unstable();
        pool
    }

    /// `k` distinct indices from `0..n`, sorted.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        let pool: Vec<usize> = (0..n).collect();
        self.sample_from(&pool, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_streams_differ() {
        let a = Rng::derive(1, &[stream::MASK]).next_u64_once();
        let b = Rng::derive(1, &[stream::GROW]).next_u64_once();
        assert_ne!(a, b);
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = Rng::new(3);
        for n in [1u64, 2, 3, 7, 1000] {
            for _ in 0..200 {
                assert!(r.below(n) < n);
            }
        }
    }

    #[test]
    fn sample_is_distinct_and_sorted() {
        let mut r = Rng::new(9);
        let s = r.sample_indices(50, 20);
        assert_eq!(s.len(), 20);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    impl Rng {
        fn next_u64_once(mut self) -> u64 {
            self.next_u64()
        }
    }
}
