//! Seedable, splittable random streams.
//!
//! Every stochastic operation in the crate takes an explicit [`StreamRng`].
//! A stream is identified by the model seed plus a chain of names, so
//! ensemble members, dropout masks, gate draws and data shuffles all consume
//! independent ChaCha streams and reruns with the same seed are bit-identical.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// One independent random stream.
#[derive(Clone, Debug)]
pub struct StreamRng {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

// FNV-1a over the parent stream id and the child name.
fn derive_stream(parent: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ parent;
    for &byte in name.as_bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl StreamRng {
    /// Root stream for a seed.
    pub fn from_seed(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        StreamRng { seed, stream, rng }
    }

    /// Split off an independent child stream. Splitting does not disturb the
    /// parent's state, and the same `(seed, name chain)` always yields the
    /// same stream.
    pub fn stream(&self, name: &str) -> StreamRng {
        Self::with_stream(self.seed, derive_stream(self.stream, name))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw (Box-Muller).
    pub fn normal(&mut self) -> f64 {
        let mut u1 = self.uniform();
        if u1 == 0.0 {
            u1 = f64::MIN_POSITIVE;
        }
        let u2 = self.uniform();
        let r = crate::num::sqrt(-2.0 * crate::num::ln(u1));
        r * crate::num::cos(2.0 * core::f64::consts::PI * u2)
    }

    pub fn normal_scaled(&mut self, mean: f64, std: f64) -> f64 {
        mean + std * self.normal()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Poisson draw by inversion of the exponential inter-arrival product
    /// (Knuth); adequate for the small rates used here.
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        debug_assert!(lambda >= 0.0);
        if lambda == 0.0 {
            return 0;
        }
        let limit = crate::num::exp(-lambda);
        let mut k = 0u64;
        let mut p = 1.0;
        loop {
            p *= self.uniform();
            if p <= limit {
                return k;
            }
            k += 1;
        }
    }

    /// Draw an index in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-shift; bias is negligible for the index ranges used here.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
