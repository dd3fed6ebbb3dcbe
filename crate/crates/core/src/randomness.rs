//! Seed-addressed Gaussian noise for the driving Wiener process.
//!
//! A replicate's generator is ChaCha8 keyed by a 64-bit avalanche mix of
//! `(master_seed, replicate_index)`, with the ChaCha stream id separating
//! independent uses (noise, oracle, auxiliary draws) inside one replicate.
//! Nothing is shared between replicates, so results do not depend on the
//! order in which replicates are executed or on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DyadicGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replicate_index: u64,
}

/// Independent sub-streams of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Noise = 0,
    Oracle = 1,
    Aux = 2,
}

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedSpec {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        Self {
            master_seed,
            replicate_index,
        }
    }

    /// 64-bit key of this replicate; a pure function of both fields.
    pub fn key(&self) -> u64 {
        let m = mix64(self.master_seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
        mix64(m ^ mix64(self.replicate_index.wrapping_add(0xd1b5_4a32_d192_ed03)))
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key());
        rng.set_stream(stream as u64);
        rng
    }

    /// Replicate `i` under the same master seed.
    pub fn replicate(&self, i: u64) -> Self {
        Self::new(self.master_seed, i)
    }
}

/// Increments `ΔW_i = W(t_{i+1}) - W(t_i)` on every cell of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    grid: DyadicGrid,
    increments: Vec<f64>,
}

impl NoisePath {
    pub fn from_increments(grid: DyadicGrid, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.cells() {
            return Err(Error::LengthMismatch {
                expected: grid.cells(),
                actual: increments.len(),
            });
        }
        if increments.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("noise increments must be finite".into()));
        }
        Ok(Self { grid, increments })
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// `W_T`.
    pub fn terminal(&self) -> f64 {
        self.increments.iter().sum()
    }

    /// Cameron-Martin shift `W + eps * ∫ h`, with `h` sampled at midpoints.
    pub fn shifted(&self, eps: f64, h: &[f64]) -> Result<Self> {
        if h.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: h.len(),
            });
        }
        let dt = self.grid.step();
        let increments = self
            .increments
            .iter()
            .zip(h)
            .map(|(w, hi)| w + eps * hi * dt)
            .collect();
        Ok(Self {
            grid: self.grid,
            increments,
        })
    }
}

pub fn sample_noise(seed: SeedSpec, g: &DyadicGrid) -> NoisePath {
    let mut rng = seed.rng(Stream::Noise);
    let sd = g.step().sqrt();
    let increments = (0..g.cells())
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    NoisePath {
        grid: *g,
        increments,
    }
}

/// `Σ h(m_i) ΔW_i` for `h` given at the cell midpoints.
pub fn wiener_integral(h: &[f64], w: &NoisePath) -> Result<f64> {
    if h.len() != w.len() {
        return Err(Error::LengthMismatch {
            expected: w.len(),
            actual: h.len(),
        });
    }
    Ok(h.iter().zip(&w.increments).map(|(a, b)| a * b).sum())
}
