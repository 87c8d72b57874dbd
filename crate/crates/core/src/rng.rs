//! Seeded pseudo-randomness.
//!
//! The generator is ChaCha12 (via `rand_chacha`), a fixed, documented
//! algorithm: identical seeds produce identical streams within a release, and
//! `split` derives independent substreams by assigning distinct 64-bit stream
//! ids to the same key, so adding draws to one consumer never perturbs the
//! others.
//!
//! Continuous transforms are spelled out here rather than pulled from a
//! distributions crate so the exact bit-to-sample mapping is part of this
//! crate's contract:
//!
//! - uniform: `u = (next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! - Gaussian: Box-Muller, `z = sqrt(-2 ln u1) * cos(2 pi u2)` with `u1`
//!   clamped away from zero.
//! - Gumbel: `g = -ln(-ln u)` with `u` clamped to `[1e-12, 1 - 1e-12]`.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{Error, Result};

/// Exclusively-owned deterministic random stream.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    rng: ChaCha12Rng,
}

impl RngState {
    /// Master stream for a seed (stream id 0).
    pub fn from_seed(seed: u64) -> Self {
        RngState::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngState { seed, stream, rng }
    }

    /// Independent substream identified by `label`. Substream draws do not
    /// affect this stream's position.
    pub fn split(&self, label: u64) -> RngState {
        // Streams are keyed by (seed, label-chain); mixing keeps nested
        // splits distinct without tracking a tree.
        let mixed = self
            .stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(label)
            .wrapping_add(1);
        RngState::with_stream(self.seed, mixed)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Draw from `N(mean, variance)`. Variance zero returns `mean` exactly.
    pub fn gaussian(&mut self, mean: f64, variance: f64) -> Result<f64> {
        if variance < 0.0 {
            return Err(Error::invalid(format!(
                "negative variance {variance} in gaussian draw"
            )));
        }
        if variance == 0.0 {
            return Ok(mean);
        }
        let u1 = self.uniform().max(1e-300);
        let u2 = self.uniform();
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        Ok(mean + variance.sqrt() * z)
    }

    /// Standard Gumbel draw, clamped away from the infinities.
    pub fn gumbel(&mut self) -> f64 {
        let u = self.uniform().clamp(1e-12, 1.0 - 1e-12);
        -(-u.ln()).ln()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is < 2^-50 for the alphabet sizes used here.
        (self.next_u64() % n as u64) as usize
    }
}

/// Free-function form of the Gaussian draw.
pub fn sample_gaussian(rng: &mut RngState, mean: f64, variance: f64) -> Result<f64> {
    rng.gaussian(mean, variance)
}
