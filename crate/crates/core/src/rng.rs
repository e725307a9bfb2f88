//! Seedable, splittable random source.
//!
//! Every stochastic step (initialization, dropout masks, shuffles, grid
//! subsampling) draws from a `DetRng` derived from a root seed by a chain of
//! named splits, so results do not depend on thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct DetRng {
    seed: [u8; 32],
    inner: ChaCha8Rng,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        let seed = ChaCha8Rng::seed_from_u64(seed).get_seed();
        Self::from_seed_bytes(seed)
    }

    fn from_seed_bytes(seed: [u8; 32]) -> Self {
        DetRng {
            seed,
            inner: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Independent child generator keyed by `key`. Does not advance `self`.
    pub fn split(&self, key: u64) -> DetRng {
        let mut stream = ChaCha8Rng::from_seed(self.seed);
        stream.set_stream(key.wrapping_add(1));
        let mut child = [0u8; 32];
        stream.fill_bytes(&mut child);
        Self::from_seed_bytes(child)
    }

    /// Child generator keyed by a label, e.g. `rng.split_named("dropout")`.
    pub fn split_named(&self, label: &str) -> DetRng {
        // FNV-1a; only needs to be stable across builds.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self.split(h)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        (self.inner.next_u64() % n as u64) as usize
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

impl RngCore for DetRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
