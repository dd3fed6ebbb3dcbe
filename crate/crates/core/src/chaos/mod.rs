//! Discrete multiple Wiener-Ito integrals, Hermite path simulation and the
//! exact Gaussian fractional Brownian motion used as an oracle.
//!
//! Two discrete multiple integrals are provided. [`multiple_wiener_integral`]
//! is the off-diagonal sum, skipping index tuples with a repeated entry.
//! [`wick_integral`] is the exact multiple integral of `f` read as a function
//! that is constant on grid cells; it adds Hermite (Wick) corrections on the
//! diagonals. Both satisfy a discrete isometry exactly: `k! Σ_distinct f^2 Δ^k`
//! and `k! Σ_all f^2 Δ^k` respectively. They agree when `f` vanishes on
//! repeated indices.

mod cells;
mod fbm;
mod path;

pub use cells::{
    CellRules, DirectionTable, Scheme, MIDPOINT_LEFT, MIDPOINT_NODES, PROJECTED_NODES, TABLE_CAP,
};
pub use fbm::{fbm_cholesky_oracle, FbmCholesky};
pub use path::{simulate_hermite_path, HermiteSimulator, PathSample};

use crate::error::{Error, Result};
use crate::grid::DyadicGrid;
use crate::hermite_kernel::StepFunction;
use crate::randomness::NoisePath;

pub const MAX_ORDER: usize = 3;

/// Symmetric function on `cells^k`, stored densely in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTensor {
    order: usize,
    grid: DyadicGrid,
    values: Vec<f64>,
}

fn check_order(order: usize, grid: &DyadicGrid) -> Result<usize> {
    if order > MAX_ORDER {
        return Err(Error::param("k", order as f64, "[0, 3]"));
    }
    let n = grid.cells();
    let size = (n as u128).pow(order as u32);
    if size > TABLE_CAP {
        return Err(Error::CapExceeded {
            what: "kernel tensor",
            requested: size,
            cap: TABLE_CAP,
        });
    }
    Ok(size as usize)
}

fn distinct(idx: &[usize]) -> bool {
    idx.iter()
        .enumerate()
        .all(|(p, i)| idx[p + 1..].iter().all(|j| j != i))
}

fn unflatten(mut flat: usize, n: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % n;
        flat /= n;
    }
}

impl KernelTensor {
    pub fn new(order: usize, grid: DyadicGrid, values: Vec<f64>) -> Result<Self> {
        let size = check_order(order, &grid)?;
        if values.len() != size {
            return Err(Error::LengthMismatch {
                expected: size,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("kernel tensor entries must be finite".into()));
        }
        Ok(Self {
            order,
            grid,
            values,
        })
    }

    /// Evaluates `f` at the midpoints of every tuple of distinct cells;
    /// repeated-index entries are left at zero.
    pub fn from_fn<F: FnMut(&[f64]) -> Result<f64>>(
        order: usize,
        grid: DyadicGrid,
        mut f: F,
    ) -> Result<Self> {
        let size = check_order(order, &grid)?;
        let n = grid.cells();
        let mid = grid.midpoints();
        let mut idx = vec![0usize; order];
        let mut x = vec![0.0; order];
        let mut values = vec![0.0; size];
        for (flat, v) in values.iter_mut().enumerate() {
            unflatten(flat, n, &mut idx);
            if distinct(&idx) {
                for (xi, &i) in x.iter_mut().zip(&idx) {
                    *xi = mid[i];
                }
                *v = f(&x)?;
            }
        }
        Self::new(order, grid, values)
    }

    /// `h ⊗ ... ⊗ h`, diagonal included.
    pub fn tensor_power(h: &[f64], order: usize, grid: DyadicGrid) -> Result<Self> {
        if h.len() != grid.cells() {
            return Err(Error::LengthMismatch {
                expected: grid.cells(),
                actual: h.len(),
            });
        }
        let size = check_order(order, &grid)?;
        let n = grid.cells();
        let mut idx = vec![0usize; order];
        let values = (0..size)
            .map(|flat| {
                unflatten(flat, n, &mut idx);
                idx.iter().map(|&i| h[i]).product()
            })
            .collect();
        Self::new(order, grid, values)
    }

    /// Tensor of the transfer operator applied to a step function whose
    /// partition is aligned to the grid, in the representation of `rules`.
    pub fn transfer(rules: &CellRules, g: &StepFunction) -> Result<Self> {
        let grid = *rules.grid();
        let per_cell = cell_values(&grid, g)?;
        Self::new(rules.params().k, grid, rules.transfer_values(&per_cell))
    }

    /// Tensor of `L_t`, the transfer of `1_{[0,t)}`.
    pub fn hermite_kernel(rules: &CellRules, t: f64) -> Result<Self> {
        let grid = *rules.grid();
        Self::transfer(rules, &StepFunction::indicator(t, grid.horizon())?)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let n = self.grid.cells();
        self.values[idx.iter().fold(0, |acc, &i| acc * n + i)]
    }

    /// Largest `|f(i) - f(σ i)|` over all index tuples and permutations σ.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.cells();
        let k = self.order;
        let mut idx = vec![0usize; k];
        let mut worst = 0.0f64;
        for flat in 0..self.values.len() {
            unflatten(flat, n, &mut idx);
            let v = self.values[flat];
            for perm in permutations(k) {
                let p: Vec<usize> = perm.iter().map(|&r| idx[r]).collect();
                worst = worst.max((v - self.get(&p)).abs());
            }
        }
        worst
    }

    /// `Σ_{distinct i} f(i)^2 Δ^k`.
    pub fn norm_sq(&self) -> f64 {
        let n = self.grid.cells();
        let mut idx = vec![0usize; self.order];
        let mut s = 0.0;
        for (flat, v) in self.values.iter().enumerate() {
            unflatten(flat, n, &mut idx);
            if distinct(&idx) {
                s += v * v;
            }
        }
        s * self.grid.step().powi(self.order as i32)
    }

    /// `Σ_i f(i)^2 Δ^k` over all tuples, diagonals included.
    pub fn norm_sq_all(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.step().powi(self.order as i32)
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    match k {
        0 => vec![vec![]],
        1 => vec![vec![0]],
        2 => vec![vec![0, 1], vec![1, 0]],
        _ => vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ],
    }
}

/// Per-cell values of a step function whose partition is aligned to `grid`
/// and spans `[0, T]`.
pub fn cell_values(grid: &DyadicGrid, g: &StepFunction) -> Result<Vec<f64>> {
    let idx = g.partition().node_indices(grid)?;
    if !g.partition().spans(grid) {
        return Err(Error::Invalid("step function partition must span [0, T]".into()));
    }
    let mut out = vec![0.0; grid.cells()];
    for (w, &v) in idx.windows(2).zip(g.values()) {
        out[w[0]..w[1]].iter_mut().for_each(|x| *x = v);
    }
    Ok(out)
}

/// `Σ_{i_1..i_k distinct} f(i) ΔW_{i_1} ... ΔW_{i_k}`, computed as `k!` times
/// the sum over strictly increasing tuples.
pub fn multiple_wiener_integral(f: &KernelTensor, w: &NoisePath) -> Result<f64> {
    if f.grid != *w.grid() {
        return Err(Error::GridMismatch);
    }
    let xi = w.increments();
    let n = xi.len();
    let v = &f.values;
    Ok(match f.order {
        0 => v[0],
        1 => v.iter().zip(xi).map(|(a, b)| a * b).sum(),
        2 => {
            let mut s = 0.0;
            for i in 0..n {
                let row = &v[i * n..(i + 1) * n];
                let inner: f64 = row[i + 1..].iter().zip(&xi[i + 1..]).map(|(a, b)| a * b).sum();
                s += xi[i] * inner;
            }
            2.0 * s
        }
        _ => {
            let mut s = 0.0;
            for i in 0..n {
                let mut si = 0.0;
                for j in (i + 1)..n {
                    let row = &v[(i * n + j) * n..(i * n + j + 1) * n];
                    if row[j + 1..].iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    let inner: f64 = row[j + 1..].iter().zip(&xi[j + 1..]).map(|(a, b)| a * b).sum();
                    si += xi[j] * inner;
                }
                s += xi[i] * si;
            }
            6.0 * s
        }
    })
}

/// Exact multiple integral of `f` as a cell-wise constant kernel:
/// `Σ_i f(i) :ΔW_{i_1} ... ΔW_{i_k}:`, where the Wick product replaces
/// `ΔW_i^2` by `ΔW_i^2 - Δ` and `ΔW_i^3` by `ΔW_i^3 - 3Δ ΔW_i`.
/// `f` is assumed symmetric.
pub fn wick_integral(f: &KernelTensor, w: &NoisePath) -> Result<f64> {
    if f.grid != *w.grid() {
        return Err(Error::GridMismatch);
    }
    let xi = w.increments();
    let n = xi.len();
    let dt = f.grid.step();
    let v = &f.values;
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    Ok(match f.order {
        0 => v[0],
        1 => dot(v, xi),
        2 => {
            let mut s = 0.0;
            let mut trace = 0.0;
            for i in 0..n {
                s += xi[i] * dot(&v[i * n..(i + 1) * n], xi);
                trace += v[i * n + i];
            }
            s - dt * trace
        }
        _ => {
            // T(ξ, ξ, ξ) - 3Δ Σ_l (Σ_i f_iil) ξ_l.
            let mut s = 0.0;
            let mut corr = 0.0;
            for i in 0..n {
                let mut si = 0.0;
                for j in 0..n {
                    let row = &v[(i * n + j) * n..(i * n + j + 1) * n];
                    si += xi[j] * dot(row, xi);
                }
                s += xi[i] * si;
                corr += dot(&v[(i * n + i) * n..(i * n + i + 1) * n], xi);
            }
            s - 3.0 * dt * corr
        }
    })
}

/// The multiple integral matching a discretization scheme.
pub fn scheme_integral(scheme: Scheme, f: &KernelTensor, w: &NoisePath) -> Result<f64> {
    match scheme {
        Scheme::Projected => wick_integral(f, w),
        Scheme::Midpoint => multiple_wiener_integral(f, w),
    }
}

/// The contraction matching a discretization scheme.
pub fn scheme_contraction(scheme: Scheme, f: &KernelTensor, h: &[f64], ell: usize) -> Result<KernelTensor> {
    match scheme {
        Scheme::Projected => contraction_all(f, h, ell),
        Scheme::Midpoint => contraction(f, h, ell),
    }
}

/// Contraction of the last `ell` axes against `h` over all indices,
/// repeated ones included.
pub fn contraction_all(f: &KernelTensor, h: &[f64], ell: usize) -> Result<KernelTensor> {
    contract(f, h, ell, false)
}

/// Contraction of the last `ell` axes against `h` on distinct indices:
/// `g(y) = Σ_x Δ^ℓ Π_r h(x_r) f(y, x)`, with `x` distinct from each other
/// and from `y`.
pub fn contraction(f: &KernelTensor, h: &[f64], ell: usize) -> Result<KernelTensor> {
    contract(f, h, ell, true)
}

fn contract(f: &KernelTensor, h: &[f64], ell: usize, only_distinct: bool) -> Result<KernelTensor> {
    let n = f.grid.cells();
    if h.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: h.len(),
        });
    }
    if ell > f.order {
        return Err(Error::param("ell", ell as f64, format!("[0, {}]", f.order)));
    }
    let out_order = f.order - ell;
    let scale = f.grid.step().powi(ell as i32);
    let mut out = vec![0.0; n.pow(out_order as u32)];
    let mut idx = vec![0usize; f.order];
    for (flat, &v) in f.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        unflatten(flat, n, &mut idx);
        if only_distinct && !distinct(&idx) {
            continue;
        }
        let weight: f64 = idx[out_order..].iter().map(|&i| h[i]).product();
        out[flat / n.pow(ell as u32)] += scale * weight * v;
    }
    KernelTensor::new(out_order, f.grid, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite_kernel::{kernel_lt, HermiteParams};
    use crate::randomness::{sample_noise, SeedSpec};
    use crate::special_math::factorial;
    use crate::special_math::{singular_integral, Integrand, Node, QuadratureSpec};
    use crate::stats::Summary;

    fn h_on(grid: &DyadicGrid) -> Vec<f64> {
        grid.midpoints().iter().map(|m| (3.0 * m).cos() + 0.5).collect()
    }

    #[test]
    fn first_order_constant_is_terminal_value() {
        let g = DyadicGrid::new(1.0, 6).unwrap();
        let w = sample_noise(SeedSpec::new(1, 0), &g);
        let f = KernelTensor::new(1, g, vec![1.0; 64]).unwrap();
        assert!((multiple_wiener_integral(&f, &w).unwrap() - w.terminal()).abs() < 1e-13);
    }

    #[test]
    fn second_order_product_identity() {
        let g = DyadicGrid::new(1.0, 6).unwrap();
        let h = h_on(&g);
        let f = KernelTensor::tensor_power(&h, 2, g).unwrap();
        for r in 0..5 {
            let w = sample_noise(SeedSpec::new(2, r), &g);
            let xi = w.increments();
            let lin: f64 = h.iter().zip(xi).map(|(a, b)| a * b).sum();
            let diag: f64 = h.iter().zip(xi).map(|(a, b)| a * a * b * b).sum();
            let v = multiple_wiener_integral(&f, &w).unwrap();
            assert!((v - (lin * lin - diag)).abs() < 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn third_order_product_identity() {
        // δ^3(h⊗h⊗h) = I^3 - 3 I Σh²ξ² + 2 Σh³ξ³.
        let g = DyadicGrid::new(1.0, 4).unwrap();
        let h = h_on(&g);
        let f = KernelTensor::tensor_power(&h, 3, g).unwrap();
        let w = sample_noise(SeedSpec::new(3, 0), &g);
        let xi = w.increments();
        let p1: f64 = h.iter().zip(xi).map(|(a, b)| a * b).sum();
        let p2: f64 = h.iter().zip(xi).map(|(a, b)| (a * b).powi(2)).sum();
        let p3: f64 = h.iter().zip(xi).map(|(a, b)| (a * b).powi(3)).sum();
        let expect = p1.powi(3) - 3.0 * p1 * p2 + 2.0 * p3;
        let v = multiple_wiener_integral(&f, &w).unwrap();
        assert!((v - expect).abs() < 1e-12 * (1.0 + expect.abs()));
    }

    #[test]
    fn grid_mismatch_and_caps() {
        let g1 = DyadicGrid::new(1.0, 4).unwrap();
        let g2 = DyadicGrid::new(2.0, 4).unwrap();
        let f = KernelTensor::new(1, g1, vec![1.0; 16]).unwrap();
        let w = sample_noise(SeedSpec::new(1, 0), &g2);
        assert_eq!(multiple_wiener_integral(&f, &w), Err(Error::GridMismatch));
        assert!(KernelTensor::new(4, g1, vec![0.0; 1 << 16]).is_err());
        let big = DyadicGrid::new(1.0, 10).unwrap();
        assert!(matches!(
            KernelTensor::new(3, big, vec![]),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn isometry_by_monte_carlo() {
        let g = DyadicGrid::new(1.0, 5).unwrap();
        let p = HermiteParams::new(0.7, 2).unwrap();
        for scheme in [Scheme::Midpoint, Scheme::Projected] {
            let rules = CellRules::with_scheme(p, g, scheme).unwrap();
            let f = KernelTensor::hermite_kernel(&rules, 1.0).unwrap();
            let xs: Vec<f64> = (0..10_000)
                .map(|r| scheme_integral(scheme, &f, &sample_noise(SeedSpec::new(9, r), &g)).unwrap())
                .collect();
            let m = Summary::of(&xs);
            assert!(m.mean.abs() < 3.5 * m.stderr.unwrap());
            let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            let s = Summary::of(&sq);
            let norm = match scheme {
                Scheme::Midpoint => f.norm_sq(),
                Scheme::Projected => f.norm_sq_all(),
            };
            let target = factorial(2) * norm;
            assert!((s.mean - target).abs() < 3.5 * s.stderr.unwrap(), "{} vs {target}", s.mean);
        }
    }

    #[test]
    fn wick_integral_of_tensor_powers() {
        let g = DyadicGrid::new(1.0, 4).unwrap();
        let h = h_on(&g);
        let dt = g.step();
        let w = sample_noise(SeedSpec::new(5, 2), &g);
        let s: f64 = h.iter().zip(w.increments()).map(|(a, b)| a * b).sum();
        let s2: f64 = h.iter().map(|a| a * a * dt).sum();
        for k in 1..=3 {
            let f = KernelTensor::tensor_power(&h, k, g).unwrap();
            let expect = cells::hermite(k, s, s2);
            let v = wick_integral(&f, &w).unwrap();
            assert!((v - expect).abs() < 1e-12 * (1.0 + expect.abs()), "k={k}");
        }
        // Off the diagonal the two integrals coincide.
        let rules = CellRules::with_scheme(HermiteParams::new(0.7, 2).unwrap(), g, Scheme::Midpoint).unwrap();
        let f = KernelTensor::hermite_kernel(&rules, 1.0).unwrap();
        let a = wick_integral(&f, &w).unwrap();
        let b = multiple_wiener_integral(&f, &w).unwrap();
        assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn midpoint_tensor_matches_kernel_quadrature() {
        for (h, k, lvl) in [(0.75, 1, 5), (0.6, 1, 5), (0.7, 2, 4), (0.8, 3, 3)] {
            let g = DyadicGrid::new(1.0, lvl).unwrap();
            let p = HermiteParams::new(h, k).unwrap();
            let rules = CellRules::with_scheme(p, g, Scheme::Midpoint).unwrap();
            for t in [0.5, 1.0] {
                let fast = KernelTensor::hermite_kernel(&rules, t).unwrap();
                let slow = KernelTensor::from_fn(k, g, |x| kernel_lt(&p, t, x)).unwrap();
                assert!(fast.symmetry_defect() == 0.0);
                for (a, b) in fast.values().iter().zip(slow.values()) {
                    assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-300), "H={h} k={k} {a} {b}");
                }
            }
        }
    }

    /// Cell average of `L_t` in one variable: `(1/Δ) ∫_{cell j} L_t(x) dx`.
    fn averaged_kernel_k1(p: &HermiteParams, g: &DyadicGrid, t: f64, j: usize) -> f64 {
        let (lo, hi) = (g.node(j), g.node(j + 1));
        let f = Integrand::new(|n: Node| kernel_lt(p, t, &[n.x]).unwrap_or(0.0))
            .singular_left(if j == 0 { -p.a } else { 0.0 })
            .singular_right(0.0);
        singular_integral(&f, (lo, hi), &QuadratureSpec::default()).unwrap().value / g.step()
    }

    #[test]
    fn projected_tensor_is_cell_average() {
        for h in [0.75, 0.6] {
            let g = DyadicGrid::new(1.0, 3).unwrap();
            let p = HermiteParams::new(h, 1).unwrap();
            let rules = CellRules::new(p, g).unwrap();
            for t in [0.5, 1.0] {
                let fast = KernelTensor::hermite_kernel(&rules, t).unwrap();
                for j in 0..g.cells() {
                    let slow = if g.node(j) < t { averaged_kernel_k1(&p, &g, t, j) } else { 0.0 };
                    let a = fast.values()[j];
                    assert!((a - slow).abs() <= 1e-8 * slow.abs().max(1e-12), "H={h} t={t} j={j} {a} {slow}");
                }
            }
        }
    }

    #[test]
    fn projected_second_order_entry_is_cell_average() {
        // A well-separated pair of cells, where nested Gauss-Legendre is accurate.
        let g = DyadicGrid::new(1.0, 3).unwrap();
        let p = HermiteParams::new(0.7, 2).unwrap();
        let rules = CellRules::new(p, g).unwrap();
        let fast = KernelTensor::hermite_kernel(&rules, 1.0).unwrap();
        let (xs, ws) = crate::special_math::gauss_legendre(12);
        let dt = g.step();
        let (i, j) = (2, 6);
        let mut acc = 0.0;
        for (x1, w1) in xs.iter().zip(&ws) {
            for (x2, w2) in xs.iter().zip(&ws) {
                let a = g.node(i) + 0.5 * dt * (1.0 + x1);
                let b = g.node(j) + 0.5 * dt * (1.0 + x2);
                acc += 0.25 * w1 * w2 * kernel_lt(&p, 1.0, &[a, b]).unwrap();
            }
        }
        let a = fast.get(&[i, j]);
        assert!((a - acc).abs() < 1e-6 * acc, "{a} {acc}");
    }

    #[test]
    fn projection_never_increases_the_norm() {
        // ‖L_t‖^2 = t^{2H}/k!; the projected kernel loses some of it and
        // recovers it as the grid is refined.
        for (h, k) in [(0.75, 1), (0.7, 2)] {
            let p = HermiteParams::new(h, k).unwrap();
            let mut prev = 0.0;
            for lvl in 2..=5 {
                let g = DyadicGrid::new(1.0, lvl).unwrap();
                let rules = CellRules::new(p, g).unwrap();
                let f = KernelTensor::hermite_kernel(&rules, 1.0).unwrap();
                let frac = factorial(k) * f.norm_sq_all();
                assert!(frac < 1.0 && frac > prev, "H={h} k={k} level {lvl}: {frac}");
                prev = frac;
            }
        }
    }

    #[test]
    fn increments_match_dense_route() {
        for scheme in [Scheme::Midpoint, Scheme::Projected] {
            for (h, k, lvl) in [(0.75, 1, 6), (0.7, 2, 5), (0.8, 3, 3)] {
                let g = DyadicGrid::new(1.0, lvl).unwrap();
                let rules = CellRules::with_scheme(HermiteParams::new(h, k).unwrap(), g, scheme).unwrap();
                let w = sample_noise(SeedSpec::new(4, 1), &g);
                let inc = rules.increments(w.increments());
                let z: f64 = inc.iter().sum();
                let f = KernelTensor::hermite_kernel(&rules, 1.0).unwrap();
                let dense = scheme_integral(scheme, &f, &w).unwrap();
                assert!((z - dense).abs() < 1e-10 * (1.0 + dense.abs()), "{scheme:?} k={k} {z} {dense}");
            }
        }
    }

    #[test]
    fn pull_out_terms_match_dense_contractions() {
        for scheme in [Scheme::Midpoint, Scheme::Projected] {
            for (h, k, lvl) in [(0.75, 1, 5), (0.7, 2, 4), (0.8, 3, 3)] {
                let g = DyadicGrid::new(1.0, lvl).unwrap();
                let rules = CellRules::with_scheme(HermiteParams::new(h, k).unwrap(), g, scheme).unwrap();
                let dir_h = h_on(&g);
                let n = g.cells();
                let dir = rules.direction(&dir_h, 0..n);
                let w = sample_noise(SeedSpec::new(6, 0), &g);
                let c = n - 2;
                let fast = rules.mixed(c, w.increments(), &dir);
                let mut ind = vec![0.0; n];
                ind[c] = 1.0;
                let f = KernelTensor::new(k, g, rules.transfer_values(&ind)).unwrap();
                for ell in 0..=k {
                    let con = scheme_contraction(scheme, &f, &dir_h, ell).unwrap();
                    let dense = scheme_integral(scheme, &con, &w).unwrap();
                    assert!(
                        (fast[ell] - dense).abs() < 1e-10 * (1.0 + dense.abs()),
                        "{scheme:?} k={k} ell={ell} {} {dense}",
                        fast[ell]
                    );
                }
            }
        }
    }

    #[test]
    fn contraction_of_product_tensor() {
        let g = DyadicGrid::new(1.0, 4).unwrap();
        let h = h_on(&g);
        let e: Vec<f64> = g.midpoints().iter().map(|m| m * m).collect();
        let f = KernelTensor::tensor_power(&h, 2, g).unwrap();
        let full = contraction(&f, &e, 2).unwrap();
        let dt = g.step();
        let mut brute = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    brute += h[i] * h[j] * e[i] * e[j] * dt * dt;
                }
            }
        }
        assert_eq!(full.order(), 0);
        assert!((full.values()[0] - brute).abs() < 1e-14);
        let one = contraction(&f, &e, 1).unwrap();
        let hs: f64 = h.iter().zip(&e).map(|(a, b)| a * b * dt).sum();
        for i in 0..16 {
            assert!((one.values()[i] - h[i] * (hs - h[i] * e[i] * dt)).abs() < 1e-14);
        }
    }
}
