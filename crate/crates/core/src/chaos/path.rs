use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::DyadicGrid;
use crate::hermite_kernel::HermiteParams;
use crate::randomness::NoisePath;

use super::cells::{CellRules, Scheme};

/// Values of a process at every grid node, starting from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    grid: DyadicGrid,
    values: Vec<f64>,
}

impl PathSample {
    pub fn new(grid: DyadicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::LengthMismatch {
                expected: grid.node_count(),
                actual: values.len(),
            });
        }
        if values[0] != 0.0 {
            return Err(Error::Invalid("a path sample must start at 0".into()));
        }
        Ok(Self { grid, values })
    }

    /// Cumulative sums of per-cell increments.
    pub fn from_increments(grid: DyadicGrid, increments: &[f64]) -> Result<Self> {
        if increments.len() != grid.cells() {
            return Err(Error::LengthMismatch {
                expected: grid.cells(),
                actual: increments.len(),
            });
        }
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for d in increments {
            acc += d;
            values.push(acc);
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// `t,value` rows with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{:.16e},{:.16e}", self.grid.node(i), v);
        }
        s
    }
}

/// Cached quadrature tables for repeated simulation on one grid.
#[derive(Debug, Clone)]
pub struct HermiteSimulator {
    rules: CellRules,
}

impl HermiteSimulator {
    pub fn new(params: HermiteParams, grid: DyadicGrid) -> Result<Self> {
        Self::with_scheme(params, grid, Scheme::default())
    }

    pub fn with_scheme(params: HermiteParams, grid: DyadicGrid, scheme: Scheme) -> Result<Self> {
        Ok(Self {
            rules: CellRules::with_scheme(params, grid, scheme)?,
        })
    }

    pub fn rules(&self) -> &CellRules {
        &self.rules
    }

    pub fn params(&self) -> &HermiteParams {
        self.rules.params()
    }

    pub fn grid(&self) -> &DyadicGrid {
        self.rules.grid()
    }

    /// `Z_{t_{c+1}} - Z_{t_c}`, each the discrete multiple integral of the
    /// transfer of `1_{[t_c, t_{c+1})}`.
    pub fn cell_increments(&self, w: &NoisePath) -> Result<Vec<f64>> {
        if w.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(self.rules.increments(w.increments()))
    }

    pub fn simulate(&self, w: &NoisePath) -> Result<PathSample> {
        PathSample::from_increments(*self.grid(), &self.cell_increments(w)?)
    }
}

pub fn simulate_hermite_path(p: &HermiteParams, g: &DyadicGrid, w: &NoisePath) -> Result<PathSample> {
    HermiteSimulator::new(*p, *g)?.simulate(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let g = DyadicGrid::new(1.0, 1).unwrap();
        let p = PathSample::from_increments(g, &[0.5, -0.25]).unwrap();
        assert_eq!(p.values(), &[0.0, 0.5, 0.25]);
        let csv = p.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,value");
        assert_eq!(lines.len(), 4);
        let back: f64 = lines[3].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(back, 0.25);
        assert!(PathSample::new(g, vec![1.0, 0.0, 0.0]).is_err());
    }
}
