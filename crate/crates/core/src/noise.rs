//! Counter-addressed Gaussian noise streams.
//!
//! Built on ChaCha8, which supports cheap jump-ahead: a stream is keyed by
//! `(seed, stream)` and every block of draws lives at a fixed word position,
//! so each `(stream, block, offset)` tuple maps to one reproducible value
//! independent of what else was drawn. Paired comparisons (optimized vs
//! reference integration) consume identical blocks by construction, and any
//! block can be regenerated without replaying its predecessors.
//!
//! Normals come from Box–Muller on fixed-count uniform draws: exactly two
//! `u64`s per pair, so consumption is deterministic (no rejection).

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::Ensemble;
use crate::error::Result;
use crate::fm;

/// Each block owns 2⁴⁰ ChaCha words (≈ 2.7·10¹¹ normals), far beyond any
/// single step's demand.
const BLOCK_SHIFT: u32 = 40;

/// Well-known block indices. Steps, restarts and bridge noises live in
/// disjoint ranges so no tuple ever collides.
pub mod blocks {
    /// Initial-ensemble draw.
    pub const INIT: u64 = 0;

    /// Noise block for integration step `s`.
    pub fn step(s: usize) -> u64 {
        1 + s as u64
    }

    /// Fresh initial ensemble for restart `k` of a backtracking policy.
    pub fn restart(k: usize) -> u64 {
        (1u64 << 32) + k as u64
    }

    /// Brownian-bridge refinement noise when step `s` is retried at half
    /// step size.
    pub fn bridge(s: usize) -> u64 {
        (1u64 << 33) + s as u64
    }
}

/// A reproducible stream of standard normal draws.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    base: ChaCha8Rng,
}

impl NoiseStream {
    /// `seed` is the master seed shared by a whole benchmark; `stream`
    /// identifies the attempt or run.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(stream);
        NoiseStream { base }
    }

    /// Fills `out` with standard normals from the given block.
    pub fn normals_into(&self, block: u64, out: &mut [f64]) {
        let mut rng = self.base.clone();
        rng.set_word_pos((block as u128) << BLOCK_SHIFT);
        let mut chunks = out.chunks_exact_mut(2);
        for pair in &mut chunks {
            let (z0, z1) = box_muller(rng.next_u64(), rng.next_u64());
            pair[0] = z0;
            pair[1] = z1;
        }
        if let [last] = chunks.into_remainder() {
            let (z0, _) = box_muller(rng.next_u64(), rng.next_u64());
            *last = z0;
        }
    }

    pub fn normals(&self, block: u64, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.normals_into(block, &mut out);
        out
    }

    /// Draws an i.i.d. Gaussian ensemble `mean + std·z`.
    pub fn gaussian_ensemble(
        &self,
        block: u64,
        n_samples: usize,
        dim: usize,
        mean: f64,
        std: f64,
    ) -> Result<Ensemble> {
        let mut data = self.normals(block, n_samples * dim);
        for v in data.iter_mut() {
            *v = mean + std * *v;
        }
        Ensemble::new(data, n_samples, dim)
    }
}

/// Box–Muller transform of two `u64`s; uniform inputs are mapped into
/// `(0, 1]` so the logarithm is always finite.
fn box_muller(a: u64, b: u64) -> (f64, f64) {
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let r = fm::sqrt(-2.0 * fm::ln(u1));
    let (s, c) = fm::sincos(core::f64::consts::TAU * u2);
    (r * c, r * s)
}
