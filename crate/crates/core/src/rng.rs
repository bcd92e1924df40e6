//! Counter-based deterministic random number generator with splittable streams.
//!
//! Every stochastic component in this crate draws from [`StreamRng`]. The
//! generator is a pure function of `(key, counter)`, so streams can be split
//! without sharing state and results are bit-identical across platforms and
//! across serial/parallel execution. The exact algorithm is documented in
//! `docs/model-format.md` so that other implementations can reproduce runs.
//!
//! Outputs are produced by the 64-bit finalizer
//!
//! ```text
//! fin(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!         z ^= z >> 27; z *= 0x94D049BB133111EB;
//!         z ^= z >> 31; return z
//! ```
//!
//! applied to `key + (counter+1) * 0x9E3779B97F4A7C15` (wrapping arithmetic).
//! Child streams are derived as `child_key = fin(key ^ fin(index + SPLIT))`
//! with `SPLIT = 0xD6E8FEB86659FD93`, which keeps parent and child sequences
//! statistically independent for all practical purposes.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLIT: u64 = 0xD6E8_FEB8_6659_FD93;

#[inline]
fn fin(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    z
}

/// A splittable counter-based random stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    /// Root stream for a run seed.
    pub fn new(seed: u64) -> Self {
        StreamRng {
            key: fin(seed ^ GOLDEN),
            counter: 0,
        }
    }

    /// Derive an independent child stream. Splitting does not advance `self`.
    pub fn split(&self, index: u64) -> Self {
        StreamRng {
            key: fin(self.key ^ fin(index.wrapping_add(SPLIT))),
            counter: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        fin(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. Uses multiply-shift with rejection so the
    /// result is exactly uniform. `n` must be nonzero.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0, "next_below(0)");
        // Lemire's method: rejection zone keeps the distribution exact.
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Bernoulli draw with probability `p` (clamped to `[0, 1]`).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            return false;
        }
        if p >= 1.0 {
            return true;
        }
        self.next_f64() < p
    }

    /// Weight-proportional index selection. The weights must not all be zero.
    pub fn weighted_index(&mut self, weights: &[u64]) -> usize {
        let total: u64 = weights.iter().sum();
        debug_assert!(total > 0, "weighted_index with zero total weight");
        let mut x = self.next_below(total);
        for (i, &w) in weights.iter().enumerate() {
            if x < w {
                return i;
            }
            x -= w;
        }
        unreachable!("weighted_index ran past total weight")
    }
}
