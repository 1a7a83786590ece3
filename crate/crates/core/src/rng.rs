//! Addressable Gaussian noise.
//!
//! Every draw is a pure function of `(seed, purpose, timestep, index)`: the
//! pair `(purpose, timestep)` selects a ChaCha stream and element `index`
//! reads a fixed 4-word block of it, which Box-Muller turns into one standard
//! normal value. Results therefore do not depend on evaluation order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a batch of noise is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Purpose {
    /// `w` term of a stochastic inversion step.
    Inversion = 1,
    /// `w` term of a stochastic denoising step.
    Denoising = 2,
    /// Fresh noise mixed into the handle region.
    Blend = 3,
    /// Test and benchmark fixtures.
    Fixture = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    seed: u64,
}

const WORDS_PER_DRAW: u128 = 4;

impl NoiseSource {
    pub const fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn stream(&self, purpose: Purpose, timestep: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((purpose as u64) << 32) | timestep as u64);
        rng
    }

    /// Single draw at `index`.
    pub fn normal(&self, purpose: Purpose, timestep: u32, index: u64) -> f64 {
        let mut rng = self.stream(purpose, timestep);
        rng.set_word_pos(index as u128 * WORDS_PER_DRAW);
        box_muller(rng.next_u64(), rng.next_u64())
    }

    /// Fills `out[i]` with the draw at index `i`.
    pub fn fill_normal(&self, purpose: Purpose, timestep: u32, out: &mut [f64]) {
        let mut rng = self.stream(purpose, timestep);
        for v in out.iter_mut() {
            *v = box_muller(rng.next_u64(), rng.next_u64());
        }
    }

    /// Uniform draw in `(0, 1)` at `index`.
    pub fn uniform(&self, purpose: Purpose, timestep: u32, index: u64) -> f64 {
        let mut rng = self.stream(purpose, timestep);
        rng.set_word_pos(index as u128 * WORDS_PER_DRAW);
        unit_open(rng.next_u64())
    }
}

/// Maps 53 random bits into `(0, 1)`.
#[inline]
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

#[inline]
fn box_muller(a: u64, b: u64) -> f64 {
    let u1 = unit_open(a);
    let u2 = unit_open(b);
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}
