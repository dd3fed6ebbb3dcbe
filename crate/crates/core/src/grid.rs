//! Uniform dyadic time grids and partitions aligned to them.
//!
//! Every node is produced as `T * i * 2^-n_max` from its integer index, so the
//! level-`n` nodes `T * i * 2^-n` are bit-identical to the level-`n_max` nodes
//! with index `i << (n_max - n)`. Variation statistics at different levels
//! therefore share nodes exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[0, T]` with `2^level_max` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicGrid {
    horizon: f64,
    level_max: u32,
}

impl DyadicGrid {
    pub const MAX_LEVEL: u32 = 24;

    pub fn new(horizon: f64, level_max: u32) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param("T", horizon, "(0, inf)"));
        }
        if !(1..=Self::MAX_LEVEL).contains(&level_max) {
            return Err(Error::param("n_max", level_max as f64, "[1, 24]"));
        }
        Ok(Self { horizon, level_max })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn level_max(&self) -> u32 {
        self.level_max
    }

    pub fn cells(&self) -> usize {
        1usize << self.level_max
    }

    pub fn node_count(&self) -> usize {
        self.cells() + 1
    }

    /// Cell width `T * 2^-n_max`.
    pub fn step(&self) -> f64 {
        self.node(1)
    }

    /// Node `t_i = T * i * 2^-n_max`; scaling by a power of two is exact.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.cells());
        self.horizon * (i as f64) / (self.cells() as f64)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.node_count()).map(|i| self.node(i)).collect()
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        debug_assert!(i < self.cells());
        self.horizon * ((2 * i + 1) as f64) / ((2 * self.cells()) as f64)
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.cells()).map(|i| self.midpoint(i)).collect()
    }

    /// Index stride between consecutive level-`n` nodes.
    pub fn level_stride(&self, n: u32) -> Result<usize> {
        if n > self.level_max {
            return Err(Error::param(
                "n",
                n as f64,
                format!("[0, {}] (grid level)", self.level_max),
            ));
        }
        Ok(1usize << (self.level_max - n))
    }

    /// Level-`n` node `t_i^n`, read from the fine grid by index.
    pub fn level_node(&self, n: u32, i: usize) -> Result<f64> {
        let stride = self.level_stride(n)?;
        if i > (1usize << n) {
            return Err(Error::Invalid(format!("level-{n} node index {i} out of range")));
        }
        Ok(self.node(i * stride))
    }

    /// Index of the node nearest to `t`, or an error when `t` is outside `[0, T]`.
    pub fn nearest_node_index(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::OutOfRange {
                value: t,
                horizon: self.horizon,
            });
        }
        let scaled = t / self.horizon * self.cells() as f64;
        Ok((scaled.round() as usize).min(self.cells()))
    }

    /// Index of `t` if it is exactly a grid node.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let i = self.nearest_node_index(t).ok()?;
        (self.node(i) == t).then_some(i)
    }
}

/// Increasing sequence `0 = s_0 <= ... <= s_m = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    points: Vec<f64>,
}

impl Partition {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Invalid(
                "a partition needs at least two points".into(),
            ));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("partition points must be finite".into()));
        }
        if points.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Invalid(
                "partition points must be nondecreasing".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    /// Node indices of the points; fails if any point is not a grid node.
    pub fn node_indices(&self, grid: &DyadicGrid) -> Result<Vec<usize>> {
        self.points
            .iter()
            .map(|&p| grid.node_index(p).ok_or(Error::Unaligned { value: p }))
            .collect()
    }

    pub fn is_aligned(&self, grid: &DyadicGrid) -> bool {
        self.node_indices(grid).is_ok()
    }

    /// Whether the partition covers exactly `[0, T]`.
    pub fn spans(&self, grid: &DyadicGrid) -> bool {
        self.points[0] == 0.0 && *self.points.last().unwrap() == grid.horizon()
    }
}

/// Snaps every point to its nearest grid node. Snapping is monotone, so the
/// order is preserved, and snapped points are nodes, so the map is idempotent.
pub fn align_partition(p: &Partition, g: &DyadicGrid) -> Result<Partition> {
    let points = p
        .points
        .iter()
        .map(|&s| g.nearest_node_index(s).map(|i| g.node(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nodes_of_small_grids() {
        assert_eq!(DyadicGrid::new(1.0, 1).unwrap().nodes(), vec![0.0, 0.5, 1.0]);
        assert_eq!(
            DyadicGrid::new(2.0, 2).unwrap().nodes(),
            vec![0.0, 0.5, 1.0, 1.5, 2.0]
        );
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(DyadicGrid::new(1.0, 0).is_err());
        assert!(DyadicGrid::new(1.0, 25).is_err());
        assert!(DyadicGrid::new(0.0, 3).is_err());
        assert!(DyadicGrid::new(-1.0, 3).is_err());
        assert!(DyadicGrid::new(f64::NAN, 3).is_err());
    }

    #[test]
    fn grid_invariants() {
        let g = DyadicGrid::new(3.7, 10).unwrap();
        let nodes = g.nodes();
        assert_eq!(nodes.len(), (1 << 10) + 1);
        assert_eq!(nodes[0], 0.0);
        assert_eq!(*nodes.last().unwrap(), 3.7);
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn alignment_examples() {
        let g4 = DyadicGrid::new(1.0, 4).unwrap();
        let p = Partition::new(vec![0.0, 0.5, 1.0]).unwrap();
        assert_eq!(align_partition(&p, &g4).unwrap(), p);

        let g1 = DyadicGrid::new(1.0, 1).unwrap();
        let q = Partition::new(vec![0.0, 0.49, 1.0]).unwrap();
        assert_eq!(align_partition(&q, &g1).unwrap().points(), &[0.0, 0.5, 1.0]);

        let r = Partition::new(vec![0.0, 1.5]).unwrap();
        assert!(matches!(
            align_partition(&r, &g1),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn unaligned_partition_is_reported() {
        let g = DyadicGrid::new(1.0, 3).unwrap();
        let p = Partition::new(vec![0.0, 0.3, 1.0]).unwrap();
        assert!(matches!(p.node_indices(&g), Err(Error::Unaligned { .. })));
        assert!(Partition::new(vec![0.0, 0.6, 0.5]).is_err());
    }

    proptest! {
        #[test]
        fn coarse_levels_are_exact_subsets(t in 0.01f64..50.0, n_max in 1u32..16) {
            let g = DyadicGrid::new(t, n_max).unwrap();
            for n in 0..=n_max {
                for i in 0..=(1usize << n) {
                    let direct = t * (i as f64) * 2f64.powi(-(n as i32));
                    prop_assert_eq!(g.level_node(n, i).unwrap(), direct);
                }
            }
        }

        #[test]
        fn alignment_is_idempotent(
            mut pts in proptest::collection::vec(0.0f64..2.0, 2..8),
            n_max in 1u32..12,
        ) {
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let g = DyadicGrid::new(2.0, n_max).unwrap();
            let p = Partition::new(pts).unwrap();
            let once = align_partition(&p, &g).unwrap();
            let twice = align_partition(&once, &g).unwrap();
            prop_assert!(once.points().windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(once, twice);
        }
    }
}
