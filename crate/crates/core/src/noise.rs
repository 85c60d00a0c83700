//! Seeded randomness: the [`NoiseSource`] trait, a ChaCha-backed implementation,
//! inverse-CDF Laplace sampling and seed derivation for parallel runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// A stream of uniform draws. Everything random in the crate goes through this.
pub trait NoiseSource {
    /// Uniform draw from `[0, 1)`.
    fn uniform(&mut self) -> f64;

    /// Laplace(0, `scale`) by inverse CDF: `u ~ U(-½, ½)`, `x = -l·sign(u)·ln(1 - 2|u|)`.
    ///
    /// One uniform draw per sample, so for a fixed stream the sample is
    /// exactly proportional to `scale`.
    fn laplace(&mut self, scale: f64) -> Result<f64> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid(format!("Laplace scale must be positive, got {scale}")));
        }
        let u = self.uniform() - 0.5;
        // u = -0.5 would give ln(0); nudge it onto the open interval
        let u = if u <= -0.5 { -0.5 + f64::EPSILON } else { u };
        Ok(-scale * u.signum() * (1.0 - 2.0 * u.abs()).ln())
    }

    /// Uniform index in `0..n`. `n` must be positive.
    fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}

impl<T: NoiseSource + ?Sized> NoiseSource for &mut T {
    fn uniform(&mut self) -> f64 {
        (**self).uniform()
    }
}

/// ChaCha8 stream seeded from a `u64`. Reproducible across platforms.
#[derive(Debug, Clone)]
pub struct SeededNoise {
    rng: ChaCha8Rng,
}

impl SeededNoise {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl NoiseSource for SeededNoise {
    fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}

/// SplitMix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` under `parent`: `splitmix64(parent ^ index)`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ index)
}
