//! Seedable, stream-splittable pseudo-random generator.
//!
//! The generator is xoshiro256** with its 256-bit state filled from a
//! SplitMix64 sequence. For a `(seed, stream)` pair the SplitMix64 start
//! value is
//!
//! ```text
//! z = mix(seed) ^ mix(stream + 0x9E3779B97F4A7C15)
//! mix(x): x ^= x >> 30; x *= 0xBF58476D1CE4E5B9;
//!         x ^= x >> 27; x *= 0x94D049BB133111EB; x ^= x >> 31
//! ```
//!
//! and the four state words are the first four SplitMix64 outputs from `z`
//! (`z += 0x9E3779B97F4A7C15; out = mix(z)`). Uniform doubles take the top
//! 53 bits of `next_u64`. Gaussians use Box–Muller on two uniforms
//! `u1 = 1 - uniform()` and `u2 = uniform()`, returning
//! `r cos(2πu2)` first and caching `r sin(2πu2)` for the next call.

use crate::error::{arg_err, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rng {
    s: [u64; 4],
    seed: u64,
    stream: u64,
    spare_gaussian: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut z = mix64(seed) ^ mix64(stream.wrapping_add(GOLDEN));
        let mut s = [0u64; 4];
        for word in &mut s {
            z = z.wrapping_add(GOLDEN);
            *word = mix64(z);
        }
        if s.iter().all(|&w| w == 0) {
            s[0] = GOLDEN;
        }
        Self {
            s,
            seed,
            stream,
            spare_gaussian: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent generator on another stream of the same seed.
    pub fn fork(&self, stream: u64) -> Rng {
        Rng::with_stream(self.seed, stream)
    }

    /// Independent child generator keyed by a label and an index. Used to
    /// derive per-cell / per-purpose streams from a master seed.
    pub fn derive(seed: u64, label: &str, index: u64) -> Rng {
        let mut h = 0xCBF2_9CE4_8422_2325u64;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01B3);
        }
        Rng::with_stream(seed, mix64(h ^ mix64(index)))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n` (unbiased, by rejection).
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_gaussian.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_gaussian = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn normal(&mut self, mu: f64, sigma: f64) -> f64 {
        mu + sigma * self.standard_normal()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    /// `k` distinct values from `0..n`, in draw order (partial Fisher–Yates).
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

impl rand_core::RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        (Rng::next_u64(self) >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        Rng::next_u64(self)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = Rng::next_u64(self).to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

/// `n` i.i.d. draws from `N(mu, sigma^2)`.
pub fn rng_gaussian(rng: &mut Rng, mu: f64, sigma: f64, n: usize) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return arg_err(format!(
            "standard deviation must be non-negative, got {sigma}"
        ));
    }
    Ok((0..n).map(|_| rng.normal(mu, sigma)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_repeats_mean() {
        let mut rng = Rng::new(3);
        assert_eq!(rng_gaussian(&mut rng, 2.5, 0.0, 7).unwrap(), vec![2.5; 7]);
    }

    #[test]
    fn negative_sigma_rejected() {
        assert!(rng_gaussian(&mut Rng::new(0), 0.0, -1.0, 3).is_err());
        assert!(rng_gaussian(&mut Rng::new(0), 0.0, f64::NAN, 3).is_err());
    }

    #[test]
    fn standard_normal_moments() {
        // 4-sigma CLT bounds: mean sd = 1/sqrt(n) ~ 0.0032; variance sd ~ sqrt(2/n) ~ 0.0045
        let mut rng = Rng::new(11);
        let n = 100_000;
        let xs = rng_gaussian(&mut rng, 0.0, 1.0, n).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn determinism_and_streams() {
        let a = rng_gaussian(&mut Rng::new(5), 0.0, 1.0, 100).unwrap();
        let b = rng_gaussian(&mut Rng::new(5), 0.0, 1.0, 100).unwrap();
        assert_eq!(a, b);
        let mut s0 = Rng::with_stream(5, 0);
        let mut s1 = Rng::with_stream(5, 1);
        assert_ne!(s0.next_u64(), s1.next_u64());
    }

    #[test]
    fn below_and_sampling_ranges() {
        let mut rng = Rng::new(1);
        let mut seen = [0usize; 5];
        for _ in 0..5000 {
            seen[rng.below(5)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800));
        let s = rng.sample_distinct(10, 4);
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
        assert!(s.iter().all(|&v| v < 10));
    }
}
