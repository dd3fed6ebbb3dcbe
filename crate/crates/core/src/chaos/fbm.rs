use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::DyadicGrid;
use crate::hermite_kernel::fbm_covariance;
use crate::randomness::{SeedSpec, Stream};

use super::path::PathSample;

pub const MAX_NODES: usize = (1 << 12) + 1;

/// Lower Cholesky factor of `R_H(t_i, t_j)` over the nonzero grid nodes.
#[derive(Debug, Clone)]
pub struct FbmCholesky {
    grid: DyadicGrid,
    h: f64,
    /// Packed lower triangle, row by row.
    l: Vec<f64>,
}

impl FbmCholesky {
    pub fn new(h: f64, grid: DyadicGrid) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::param("H", h, "(0, 1)"));
        }
        if grid.node_count() > MAX_NODES {
            return Err(Error::CapExceeded {
                what: "Cholesky nodes",
                requested: grid.node_count() as u128,
                cap: MAX_NODES as u128,
            });
        }
        let n = grid.cells();
        let t: Vec<f64> = (1..=n).map(|i| grid.node(i)).collect();
        let row = |i: usize| i * (i + 1) / 2;
        let mut l = vec![0.0; row(n)];
        for i in 0..n {
            for j in 0..=i {
                let mut s = fbm_covariance(h, t[i], t[j]);
                let (ri, rj) = (row(i), row(j));
                for m in 0..j {
                    s -= l[ri + m] * l[rj + m];
                }
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Factorization { row: i, pivot: s });
                    }
                    l[ri + i] = s.sqrt();
                } else {
                    l[ri + j] = s / l[rj + j];
                }
            }
        }
        Ok(Self { grid, h, l })
    }

    pub fn hurst(&self) -> f64 {
        self.h
    }

    pub fn sample(&self, seed: SeedSpec) -> PathSample {
        let n = self.grid.cells();
        let mut rng = seed.rng(Stream::Oracle);
        let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        let mut start = 0;
        for i in 0..n {
            let r = &self.l[start..start + i + 1];
            values.push(r.iter().zip(&z).map(|(a, b)| a * b).sum());
            start += i + 1;
        }
        PathSample::new(self.grid, values).expect("node count matches")
    }
}

pub fn fbm_cholesky_oracle(h: f64, g: &DyadicGrid, seed: SeedSpec) -> Result<PathSample> {
    Ok(FbmCholesky::new(h, *g)?.sample(seed))
}
