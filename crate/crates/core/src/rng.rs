//! Counter-based random streams.
//!
//! A stream is addressed by `(seed, substream)`. The key is derived from the
//! seed and the substream selects the ChaCha stream id, so distinct pairs give
//! independent sequences and the same pair always replays the same draws.
//! Monte Carlo code uses one substream per sample index, which makes every
//! estimate independent of how samples are scheduled across workers.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    substream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, substream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(substream);
        Self {
            seed,
            substream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn substream(&self) -> u64 {
        self.substream
    }

    /// A fresh stream with the same seed and a different substream index.
    pub fn derive(&self, substream: u64) -> Self {
        Self::new(self.seed, substream)
    }

    /// Uniform draw on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Standard exponential variate by inversion.
    #[inline]
    pub fn exponential(&mut self) -> f64 {
        -(-self.uniform()).ln_1p()
    }

    /// Standard normal variate (Box-Muller, one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
