//! Seeded Gaussian increment streams.
//!
//! One seed drives every random quantity of a trial. The phase Wiener
//! increments and the homodyne shot noise come from separate ChaCha streams
//! of the same key, so they are independent and each can be regenerated on
//! its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const PHASE_STREAM: u64 = 0;
const MEASUREMENT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStreams {
    seed: u64,
}

impl NoiseStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    /// `n` Wiener increments of variance `dt` driving the phase chain.
    pub fn phase_increments(&self, n: usize, dt: f64) -> Vec<f64> {
        gaussian_increments(&mut self.rng(PHASE_STREAM), n, dt)
    }

    /// `n` shot-noise increments of variance `dt` for the photocurrent.
    pub fn measurement_increments(&self, n: usize, dt: f64) -> Vec<f64> {
        gaussian_increments(&mut self.rng(MEASUREMENT_STREAM), n, dt)
    }
}

fn gaussian_increments(rng: &mut ChaCha8Rng, n: usize, dt: f64) -> Vec<f64> {
    let sd = dt.sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            sd * z
        })
        .collect()
}

/// Mixes a base seed with integer tags (grid index, trial index, ...) into a
/// new seed. SplitMix64 finalizer, applied once per tag.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(base), |acc, &tag| {
        splitmix(acc ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
