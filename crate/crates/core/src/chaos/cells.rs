//! Per-cell quadrature of the transfer operator.
//!
//! A kernel `L g` is `c Σ_cells g_c ∫_{cell c} Π_i f(u, x_i) du` with
//! `f(u, x) = (u/x)^a (u - x)_+^{-b}`. For every cell we fix a quadrature rule
//! in `u` and tabulate the `x`-dependence of `f` at its nodes, so that the
//! kernel restricted to a node is the rank-one tensor `g^{⊗k}`. Two ways of
//! putting `f(u, ·)` on the grid are supported, see [`Scheme`].
//!
//! Everything downstream (path increments, pull-out terms, dense tensors) is
//! assembled from these per-node vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DyadicGrid;
use crate::hermite_kernel::HermiteParams;
use crate::special_math::{beta_fn, binomial, factorial, gauss_legendre};

/// How the kernel is represented on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// `f(u, ·)` averaged over each `x`-cell, with Wick (Hermite) diagonal
    /// terms: the exact multiple integral of the cell-projected kernel,
    /// i.e. the conditional expectation of the Hermite process given the
    /// cell increments of `W`.
    #[default]
    Projected,
    /// `f(u, ·)` sampled at cell midpoints, repeated indices omitted.
    Midpoint,
}

/// `u`-nodes per cell for [`Scheme::Projected`]: GL16 after `u = t_c + Δ s^{2/a}`.
pub const PROJECTED_NODES: usize = 16;
/// `u`-nodes per cell for [`Scheme::Midpoint`]: GL10 on the left half, GL16
/// after `u = m_c + (Δ/2) s^{2/a}` on the right half.
pub const MIDPOINT_LEFT: usize = 10;
pub const MIDPOINT_NODES: usize = 26;
const AVG_NODES: usize = 8;
const NEAR_NODES: usize = 16;

/// Largest number of dense tensor or stored table entries.
pub const TABLE_CAP: u128 = 1 << 27;

fn tri(c: usize) -> usize {
    c * (c + 1) / 2
}

/// `(1/Δ) ∫_{lo}^{min(hi, u)} (u/x)^a (u - x)^{-b} dx`, using `a + b = 1`.
#[allow(clippy::too_many_arguments)]
fn cell_average(
    a: f64,
    b: f64,
    bab: f64,
    u: f64,
    lo: f64,
    hi: f64,
    dt: f64,
    gl: &(Vec<f64>, Vec<f64>),
    near: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let hi = hi.min(u);
    if hi <= lo {
        return 0.0;
    }
    let (xs, ws) = gl;
    let quad = |len: f64, f: &dyn Fn(f64) -> f64| -> f64 {
        let mut s = 0.0;
        for (x, w) in xs.iter().zip(ws) {
            s += w * f(0.5 * len * (1.0 + x));
        }
        0.5 * len * s
    };
    if lo == 0.0 {
        // x = u y turns the integral into u^a ∫ y^{-a} (1-y)^{-b} dy.
        let y1 = hi / u;
        let ua = u.powf(a) / dt;
        if y1 >= 1.0 {
            return ua * bab;
        }
        if y1 <= 0.5 {
            return ua * incomplete_series(a, b, y1);
        }
        return ua * (bab - incomplete_series(b, a, 1.0 - y1));
    }
    if u - hi >= hi - lo {
        // At least one cell away from u: the integrand is analytic on a
        // Bernstein ellipse of parameter 3 + 2√2 around the cell.
        let f = |d: f64| {
            let x = lo + d;
            (u / x).powf(a) * (u - x).powf(-b)
        };
        return quad(hi - lo, &f) / dt;
    }
    // w = (u - x)^a removes (u - x)^{-b}.
    let (xs, ws) = near;
    let w0 = (u - hi).powf(a);
    let w1 = (u - lo).powf(a);
    let half = 0.5 * (w1 - w0);
    let mut acc = 0.0;
    for (x, w) in xs.iter().zip(ws) {
        let wv = w0 + half * (1.0 + x);
        acc += w * (u / (u - wv.powf(1.0 / a))).powf(a);
    }
    half * acc / (a * dt)
}

/// `∫_0^x y^{-a} (1-y)^{-b} dy` for `x <= 1/2`, from the binomial series of
/// `(1-y)^{-b}`.
fn incomplete_series(a: f64, b: f64, x: f64) -> f64 {
    let mut term = 1.0; // (b)_n / n!
    let mut xp = x.powf(1.0 - a);
    let mut sum = 0.0;
    for n in 0..200 {
        let add = term * xp / (n as f64 + 1.0 - a);
        sum += add;
        if add.abs() < 1e-17 * sum.abs() {
            break;
        }
        term *= (b + n as f64) / (n as f64 + 1.0);
        xp *= x;
    }
    sum
}

/// Quadrature tables of the transfer operator on one grid.
#[derive(Debug, Clone)]
pub struct CellRules {
    params: HermiteParams,
    grid: DyadicGrid,
    scheme: Scheme,
    nodes: usize,
    /// Per cell and node: the `u`-weight times `c_{H,k}`.
    weights: Vec<f64>,
    /// Midpoint only: singular weight (with `(u - m_c)^{-b}` and `(u/m_c)^a`) times `c_{H,k}`.
    sing: Vec<f64>,
    /// Rows `g_q(j)` per cell and node (`k ≥ 2`). Projected: `j ≤ c`; midpoint: `j < c`.
    table: Vec<f64>,
    /// Projected, `k ≥ 2`: `σ_q^2 = Δ Σ_j g_q(j)^2`.
    sigma2: Vec<f64>,
    /// `k = 1`: `inc_c(j) = Σ_q w_q g_q(j)`, `j ≤ c`.
    inc: Vec<f64>,
}

/// Projection of one direction on the per-node vectors of some cells.
#[derive(Debug, Clone)]
pub struct DirectionTable {
    cells: std::ops::Range<usize>,
    kind: DirectionKind,
}

#[derive(Debug, Clone)]
enum DirectionKind {
    /// `Σ_j g_q(j) ρ_j` per node (projected, `k ≥ 2`) or `Σ_j inc_c(j) ρ_j` per cell (`k = 1`).
    Projected(Vec<f64>),
    /// `ρ_j = h_j Δ` itself (midpoint, `k ≥ 2`).
    Raw(Vec<f64>),
}

impl CellRules {
    pub fn new(params: HermiteParams, grid: DyadicGrid) -> Result<Self> {
        Self::with_scheme(params, grid, Scheme::default())
    }

    pub fn with_scheme(params: HermiteParams, grid: DyadicGrid, scheme: Scheme) -> Result<Self> {
        let k = params.k;
        if !(1..=3).contains(&k) {
            return Err(Error::param("k", k as f64, "{1, 2, 3}"));
        }
        let n = grid.cells();
        let dense = (n as u128).pow(k as u32);
        if dense > TABLE_CAP {
            return Err(Error::CapExceeded {
                what: "kernel tensor",
                requested: dense,
                cap: TABLE_CAP,
            });
        }
        let nodes = match scheme {
            Scheme::Projected => PROJECTED_NODES,
            Scheme::Midpoint => MIDPOINT_NODES,
        };
        let stored = if k == 1 {
            tri(n) as u128
        } else {
            (nodes * tri(n)) as u128
        };
        if stored > TABLE_CAP {
            return Err(Error::CapExceeded {
                what: "cell quadrature table",
                requested: stored,
                cap: TABLE_CAP,
            });
        }
        let mut rules = Self {
            params,
            grid,
            scheme,
            nodes,
            weights: Vec::with_capacity(n * nodes),
            sing: Vec::new(),
            table: Vec::new(),
            sigma2: Vec::new(),
            inc: Vec::new(),
        };
        match scheme {
            Scheme::Projected => rules.build_projected(),
            Scheme::Midpoint => rules.build_midpoint(),
        }
        Ok(rules)
    }

    fn build_projected(&mut self) {
        let (a, b, ch) = (self.params.a, self.params.b, self.params.c);
        let k = self.params.k;
        let grid = self.grid;
        let n = grid.cells();
        let dt = grid.step();
        let bab = beta_fn(b, a).expect("positive exponents");
        let gl_avg = gauss_legendre(AVG_NODES);
        let gl_near = gauss_legendre(NEAR_NODES);
        let (xs, ws) = gauss_legendre(PROJECTED_NODES);
        let pw = 2.0 / a;
        let mut offs = [0.0; PROJECTED_NODES];
        let mut base = [0.0; PROJECTED_NODES];
        for q in 0..PROJECTED_NODES {
            let s = 0.5 * (1.0 + xs[q]);
            offs[q] = dt * s.powf(pw);
            base[q] = 0.5 * ws[q] * dt * pw * s.powf(pw - 1.0);
        }
        if k == 1 {
            self.inc.reserve(tri(n));
        } else {
            self.table.reserve(PROJECTED_NODES * tri(n));
            self.sigma2.reserve(PROJECTED_NODES * n);
        }
        let mut row = vec![0.0; n];
        let mut acc = vec![0.0; n];
        for c in 0..n {
            let tc = grid.node(c);
            acc[..=c].iter_mut().for_each(|v| *v = 0.0);
            for q in 0..PROJECTED_NODES {
                let u = tc + offs[q];
                let w = ch * base[q];
                self.weights.push(w);
                for (j, g) in row[..=c].iter_mut().enumerate() {
                    *g = cell_average(a, b, bab, u, grid.node(j), grid.node(j + 1), dt, &gl_avg, &gl_near);
                }
                if k == 1 {
                    for (s, g) in acc[..=c].iter_mut().zip(&row[..=c]) {
                        *s += w * g;
                    }
                } else {
                    self.table.extend_from_slice(&row[..=c]);
                    self.sigma2.push(dt * row[..=c].iter().map(|g| g * g).sum::<f64>());
                }
            }
            if k == 1 {
                self.inc.extend_from_slice(&acc[..=c]);
            }
        }
    }

    fn build_midpoint(&mut self) {
        let (a, b, ch) = (self.params.a, self.params.b, self.params.c);
        let k = self.params.k;
        let grid = self.grid;
        let n = grid.cells();
        let dt = grid.step();
        let half = 0.5 * dt;
        let (xl, wl) = gauss_legendre(MIDPOINT_LEFT);
        let (xr, wr) = gauss_legendre(MIDPOINT_NODES - MIDPOINT_LEFT);
        let pw = 2.0 / a;
        let mut offs = [0.0; MIDPOINT_NODES];
        let mut base = [0.0; MIDPOINT_NODES];
        let mut sing = [0.0; MIDPOINT_NODES];
        for q in 0..MIDPOINT_LEFT {
            offs[q] = 0.5 * half * (1.0 + xl[q]);
            base[q] = 0.5 * half * wl[q];
        }
        for q in 0..(MIDPOINT_NODES - MIDPOINT_LEFT) {
            let s = 0.5 * (1.0 + xr[q]);
            let r = MIDPOINT_LEFT + q;
            offs[r] = half + half * s.powf(pw);
            // du = L p s^{p-1} ds; (u - m_c)^{-b} du = p L^a s^{pa-1} ds.
            base[r] = 0.5 * wr[q] * half * pw * s.powf(pw - 1.0);
            sing[r] = 0.5 * wr[q] * pw * half.powf(a) * s.powf(pw * a - 1.0);
        }
        if k == 1 {
            self.inc.reserve(tri(n));
        } else {
            self.table.reserve(MIDPOINT_NODES * tri(n));
        }
        self.sing.reserve(n * MIDPOINT_NODES);
        let mut acc = vec![0.0; n];
        for c in 0..n {
            let tc = grid.node(c);
            let mc = grid.midpoint(c);
            acc[..=c].iter_mut().for_each(|v| *v = 0.0);
            for q in 0..MIDPOINT_NODES {
                let u = tc + offs[q];
                let w = ch * base[q];
                let ws = if q >= MIDPOINT_LEFT {
                    ch * sing[q] * (u / mc).powf(a)
                } else {
                    0.0
                };
                self.weights.push(w);
                self.sing.push(ws);
                for j in 0..c {
                    // u - m_j = (t_c - m_j) + offset, both positive.
                    let dist = (c - j) as f64 * dt - half + offs[q];
                    let g = (u / grid.midpoint(j)).powf(a) * dist.powf(-b);
                    if k == 1 {
                        acc[j] += w * g;
                    } else {
                        self.table.push(g);
                    }
                }
                acc[c] += ws;
            }
            if k == 1 {
                self.inc.extend_from_slice(&acc[..=c]);
            }
        }
    }

    pub fn params(&self) -> &HermiteParams {
        &self.params
    }

    pub fn grid(&self) -> &DyadicGrid {
        &self.grid
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    fn row_len(&self, c: usize) -> usize {
        match self.scheme {
            Scheme::Projected => c + 1,
            Scheme::Midpoint => c,
        }
    }

    fn cell_rows(&self, c: usize) -> &[f64] {
        let start = match self.scheme {
            Scheme::Projected => self.nodes * tri(c),
            Scheme::Midpoint => self.nodes * (c * c.saturating_sub(1) / 2),
        };
        &self.table[start..start + self.nodes * self.row_len(c)]
    }

    /// `k = 1`: the weights of `ΔZ_c = Σ_{j ≤ c} inc_c(j) ΔW_j`.
    pub fn linear_row(&self, c: usize) -> &[f64] {
        debug_assert_eq!(self.params.k, 1);
        &self.inc[tri(c)..tri(c + 1)]
    }

    /// Increment of the process over cell `c`.
    pub fn cell_increment(&self, c: usize, xi: &[f64]) -> f64 {
        let k = self.params.k;
        if k == 1 {
            return dot(self.linear_row(c), xi);
        }
        let rows = self.cell_rows(c);
        let len = self.row_len(c);
        let w = &self.weights[c * self.nodes..(c + 1) * self.nodes];
        let mut acc = 0.0;
        match self.scheme {
            Scheme::Projected => {
                let s2 = &self.sigma2[c * self.nodes..(c + 1) * self.nodes];
                for q in 0..self.nodes {
                    let s = dot(&rows[q * len..(q + 1) * len], xi);
                    acc += w[q] * hermite(k, s, s2[q]);
                }
            }
            Scheme::Midpoint => {
                let ws = &self.sing[c * self.nodes..(c + 1) * self.nodes];
                for q in 0..self.nodes {
                    let mut e = [1.0, 0.0, 0.0, 0.0];
                    for (g, x) in rows[q * len..(q + 1) * len].iter().zip(xi) {
                        let z = g * x;
                        for d in (1..=k).rev() {
                            e[d] += z * e[d - 1];
                        }
                    }
                    acc += w[q] * e[k] + ws[q] * xi[c] * e[k - 1];
                }
                acc *= factorial(k);
            }
        }
        acc
    }

    /// Increments `Z_{t_{c+1}} - Z_{t_c}` for every cell.
    pub fn increments(&self, xi: &[f64]) -> Vec<f64> {
        assert_eq!(xi.len(), self.grid.cells());
        (0..self.grid.cells()).map(|c| self.cell_increment(c, xi)).collect()
    }

    /// Precomputes what the pull-out terms need from a direction `h` (values
    /// at the cells) over the given cells.
    pub fn direction(&self, h: &[f64], cells: std::ops::Range<usize>) -> DirectionTable {
        let dt = self.grid.step();
        let rho: Vec<f64> = h.iter().map(|v| v * dt).collect();
        let kind = if self.params.k == 1 {
            DirectionKind::Projected(cells.clone().map(|c| dot(self.linear_row(c), &rho)).collect())
        } else {
            match self.scheme {
                Scheme::Projected => {
                    let mut out = Vec::with_capacity(cells.len() * self.nodes);
                    for c in cells.clone() {
                        let rows = self.cell_rows(c);
                        let len = self.row_len(c);
                        for q in 0..self.nodes {
                            out.push(dot(&rows[q * len..(q + 1) * len], &rho));
                        }
                    }
                    DirectionKind::Projected(out)
                }
                Scheme::Midpoint => DirectionKind::Raw(rho),
            }
        };
        DirectionTable { cells, kind }
    }

    /// Pull-out terms of cell `c` for ℓ = 0..=k: the integral of order `k - ℓ`
    /// of the cell kernel with its last ℓ arguments contracted against `h Δ`.
    pub fn mixed(&self, c: usize, xi: &[f64], dir: &DirectionTable) -> [f64; 4] {
        let k = self.params.k;
        assert!(dir.cells.contains(&c), "direction table does not cover cell {c}");
        let local = c - dir.cells.start;
        let mut out = [0.0; 4];
        if k == 1 {
            out[0] = self.cell_increment(c, xi);
            if let DirectionKind::Projected(v) = &dir.kind {
                out[1] = v[local];
            }
            return out;
        }
        let rows = self.cell_rows(c);
        let len = self.row_len(c);
        let w = &self.weights[c * self.nodes..(c + 1) * self.nodes];
        match (&dir.kind, self.scheme) {
            (DirectionKind::Projected(r), Scheme::Projected) => {
                let s2 = &self.sigma2[c * self.nodes..(c + 1) * self.nodes];
                for q in 0..self.nodes {
                    let s = dot(&rows[q * len..(q + 1) * len], xi);
                    let rq = r[local * self.nodes + q];
                    let mut rp = 1.0;
                    for (ell, o) in out.iter_mut().enumerate().take(k + 1) {
                        *o += w[q] * rp * hermite(k - ell, s, s2[q]);
                        rp *= rq;
                    }
                }
            }
            (DirectionKind::Raw(rho), Scheme::Midpoint) => {
                let ws = &self.sing[c * self.nodes..(c + 1) * self.nodes];
                for q in 0..self.nodes {
                    // e[p][l]: sums over disjoint index sets with p noise and l rho factors.
                    let mut e = [[0.0f64; 4]; 4];
                    e[0][0] = 1.0;
                    for (j, g) in rows[q * len..(q + 1) * len].iter().enumerate() {
                        let z = g * xi[j];
                        let y = g * rho[j];
                        for s in (1..=k).rev() {
                            for p in 0..=s {
                                let l = s - p;
                                let mut add = 0.0;
                                if p > 0 {
                                    add += z * e[p - 1][l];
                                }
                                if l > 0 {
                                    add += y * e[p][l - 1];
                                }
                                e[p][l] += add;
                            }
                        }
                    }
                    for ell in 0..=k {
                        let p = k - ell;
                        let mut sg = 0.0;
                        if p > 0 {
                            sg += xi[c] * e[p - 1][ell];
                        }
                        if ell > 0 {
                            sg += rho[c] * e[p][ell - 1];
                        }
                        out[ell] += w[q] * e[p][ell] + ws[q] * sg;
                    }
                }
                // Each pair of disjoint index sets is hit by (k-ℓ)! ℓ! ordered tuples.
                for (ell, v) in out.iter_mut().enumerate().take(k + 1) {
                    *v *= factorial(k - ell) * factorial(ell);
                }
            }
            _ => unreachable!("direction table built for another scheme"),
        }
        out
    }

    /// Dense tensor of the transfer of a cell-wise constant function.
    /// Midpoint: zero on repeated indices. Projected: diagonal blocks included.
    pub fn transfer_values(&self, g: &[f64]) -> Vec<f64> {
        let n = self.grid.cells();
        assert_eq!(g.len(), n);
        let k = self.params.k;
        let mut out = vec![0.0; n.pow(k as u32)];
        for (c, &gc) in g.iter().enumerate() {
            if gc == 0.0 {
                continue;
            }
            if k == 1 {
                for (j, w) in self.linear_row(c).iter().enumerate() {
                    out[j] += gc * w;
                }
                continue;
            }
            let rows = self.cell_rows(c);
            let len = self.row_len(c);
            for q in 0..self.nodes {
                let f = &rows[q * len..(q + 1) * len];
                let w = gc * self.weights[c * self.nodes + q];
                match self.scheme {
                    Scheme::Projected => add_power(&mut out, n, k, w, f),
                    Scheme::Midpoint => {
                        let ws = gc * self.sing[c * self.nodes + q];
                        add_offdiag(&mut out, n, k, w, ws, f, c);
                    }
                }
            }
        }
        if k >= 2 {
            symmetrize_upper(&mut out, n, k);
        }
        out
    }
}

/// Adds `w f^{⊗k}` on nondecreasing index tuples.
fn add_power(out: &mut [f64], n: usize, k: usize, w: f64, f: &[f64]) {
    let m = f.len();
    for i in 0..m {
        let wi = w * f[i];
        if k == 2 {
            for j in i..m {
                out[i * n + j] += wi * f[j];
            }
        } else {
            for j in i..m {
                let wij = wi * f[j];
                for l in j..m {
                    out[(i * n + j) * n + l] += wij * f[l];
                }
            }
        }
    }
}

/// Adds the midpoint cell kernel on strictly increasing index tuples.
fn add_offdiag(out: &mut [f64], n: usize, k: usize, w: f64, ws: f64, f: &[f64], c: usize) {
    for i in 0..c {
        if k == 2 {
            let wi = w * f[i];
            for j in (i + 1)..c {
                out[i * n + j] += wi * f[j];
            }
            out[i * n + c] += ws * f[i];
        } else {
            for j in (i + 1)..c {
                let wij = w * f[i] * f[j];
                for l in (j + 1)..c {
                    out[(i * n + j) * n + l] += wij * f[l];
                }
                out[(i * n + j) * n + c] += ws * f[i] * f[j];
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `σ^k He_k(s/σ)` written in terms of `σ^2`, so `σ = 0` is allowed.
pub(crate) fn hermite(k: usize, s: f64, s2: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => s,
        2 => s * s - s2,
        3 => s * (s * s - 3.0 * s2),
        _ => {
            let mut acc = 0.0;
            let mut sign = 1.0;
            let mut m = 0;
            while 2 * m <= k {
                let coef = binomial(k, 2 * m) * double_factorial(2 * m);
                acc += sign * coef * s.powi((k - 2 * m) as i32) * s2.powi(m as i32);
                sign = -sign;
                m += 1;
            }
            acc
        }
    }
}

fn double_factorial(n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    // (2m-1)!! for n = 2m.
    (1..n).step_by(2).map(|i| i as f64).product()
}

/// Copies the nondecreasing-index entries to every permutation of their indices.
pub(crate) fn symmetrize_upper(v: &mut [f64], n: usize, k: usize) {
    match k {
        2 => {
            for i in 0..n {
                for j in (i + 1)..n {
                    v[j * n + i] = v[i * n + j];
                }
            }
        }
        3 => {
            for i in 0..n {
                for j in i..n {
                    for l in j..n {
                        let x = v[(i * n + j) * n + l];
                        for (p, q, r) in [(i, l, j), (j, i, l), (j, l, i), (l, i, j), (l, j, i)] {
                            v[(p * n + q) * n + r] = x;
                        }
                    }
                }
            }
        }
        _ => {}
    }
}
