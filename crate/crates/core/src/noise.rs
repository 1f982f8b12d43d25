//! Gaussian increments keyed by `(seed, step index, component)`.
//!
//! Every standard normal consumes exactly four 32-bit words of a ChaCha8
//! stream, so the draw for a given key sits at a fixed word position and
//! can be replayed without generating the preceding steps.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const WORDS_PER_NORMAL: u128 = 4;

/// Replayable source of standard normal draws for one simulation.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: ChaCha8Rng,
    width: usize,
}

impl GaussianStream {
    /// `width` is the number of normals consumed per step (the Brownian
    /// dimension `M`).
    pub fn new(seed: u64, width: usize) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            width,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Fill `out` (length `width`) with the standard normals of `step`.
    pub fn fill_step(&mut self, step: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.width);
        let pos = step as u128 * self.width as u128 * WORDS_PER_NORMAL;
        if self.rng.get_word_pos() != pos {
            self.rng.set_word_pos(pos);
        }
        for v in out.iter_mut() {
            *v = box_muller(self.rng.next_u64(), self.rng.next_u64());
        }
    }

    /// The single normal keyed by `(step, component)`.
    pub fn normal_at(&mut self, step: u64, component: usize) -> f64 {
        assert!(component < self.width);
        let pos = (step as u128 * self.width as u128 + component as u128) * WORDS_PER_NORMAL;
        self.rng.set_word_pos(pos);
        box_muller(self.rng.next_u64(), self.rng.next_u64())
    }
}

fn box_muller(a: u64, b: u64) -> f64 {
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0);
    let u2 = (b >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Independent child seed for key `index` under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng.next_u64()
}
