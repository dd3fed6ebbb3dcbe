//! Smooth cylindrical variables of ridge form `φ(Σ a_i I(h_i))`, their
//! Malliavin derivatives, elementary processes, and the Skorokhod integral
//! with respect to a Hermite process.
//!
//! For a coefficient `F = φ(A)` with `A = I(h̄)` and a deterministic kernel
//! `u`, the pull-out expansion reads
//!
//! ```text
//! δ^k(F u) = Σ_ℓ (-1)^ℓ C(k, ℓ) φ^(ℓ)(A) δ^{k-ℓ}(<u, h̄^{⊗ℓ}>_ℓ)
//! ```
//!
//! where the contraction runs over the last ℓ arguments of `u`. Everything is
//! evaluated on the simulation grid, so the contraction and the lower-order
//! integrals share one discretization.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::chaos::{
    cell_values, scheme_contraction, scheme_integral, CellRules, DirectionTable, KernelTensor, PathSample, Scheme,
};
use crate::error::{Error, Result};
use crate::grid::{DyadicGrid, Partition};
use crate::hermite_kernel::{HermiteParams, StepFunction};
use crate::randomness::{sample_noise, wiener_integral, NoisePath, SeedSpec};
use crate::stats::{ols_slope, par_replicates, Summary};
use crate::special_math::binomial;

/// Highest derivative order available from the profile catalog.
pub const MAX_DERIVATIVE: usize = 3;

/// Bounded smooth profiles with bounded derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Sin,
    Cos,
    Tanh,
    /// `x ↦ e^{-x²}`.
    Gauss,
    Const(f64),
}

impl Profile {
    /// `φ^(ℓ)(x)` for `ℓ ≤ 3`.
    pub fn derivative(&self, ell: usize, x: f64) -> Result<f64> {
        if ell > MAX_DERIVATIVE {
            return Err(Error::param("order", ell as f64, "[0, 3]"));
        }
        Ok(match *self {
            Profile::Sin => (x + ell as f64 * std::f64::consts::FRAC_PI_2).sin(),
            Profile::Cos => (x + ell as f64 * std::f64::consts::FRAC_PI_2).cos(),
            Profile::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                match ell {
                    0 => t,
                    1 => s,
                    2 => -2.0 * t * s,
                    _ => -2.0 * s * (1.0 - 3.0 * t * t),
                }
            }
            Profile::Gauss => {
                let e = (-x * x).exp();
                match ell {
                    0 => e,
                    1 => -2.0 * x * e,
                    2 => (4.0 * x * x - 2.0) * e,
                    _ => (12.0 * x - 8.0 * x * x * x) * e,
                }
            }
            Profile::Const(c) => {
                if ell == 0 {
                    c
                } else {
                    0.0
                }
            }
        })
    }

    /// `sup_x |φ^(ℓ)(x)|`.
    pub fn bound(&self, ell: usize) -> Result<f64> {
        if ell > MAX_DERIVATIVE {
            return Err(Error::param("order", ell as f64, "[0, 3]"));
        }
        Ok(match *self {
            Profile::Sin | Profile::Cos => 1.0,
            Profile::Tanh => [1.0, 1.0, 4.0 / (3.0 * 3f64.sqrt()), 2.0][ell],
            Profile::Gauss => {
                // Third derivative peaks at x^2 = (3 - √6)/2.
                let x2: f64 = (3.0 - 6f64.sqrt()) / 2.0;
                let x = x2.sqrt();
                let third = (12.0 * x - 8.0 * x * x2) * (-x2).exp();
                [1.0, 2f64.sqrt() * (-0.5f64).exp(), 2.0, third][ell]
            }
            Profile::Const(c) => {
                if ell == 0 {
                    c.abs()
                } else {
                    0.0
                }
            }
        })
    }
}

/// Catalog names accepted in integrand documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileName {
    Sin,
    Cos,
    Tanh,
    Gauss,
}

impl From<ProfileName> for Profile {
    fn from(p: ProfileName) -> Self {
        match p {
            ProfileName::Sin => Profile::Sin,
            ProfileName::Cos => Profile::Cos,
            ProfileName::Tanh => Profile::Tanh,
            ProfileName::Gauss => Profile::Gauss,
        }
    }
}

/// Continuous direction functions on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Direction {
    /// `Σ_i c_i t^i`, degree at most 4.
    Poly { coeffs: Vec<f64> },
    Cos { omega: f64 },
    Sin { omega: f64 },
}

impl Direction {
    pub fn validate(&self) -> Result<()> {
        match self {
            Direction::Poly { coeffs } => {
                if coeffs.is_empty() || coeffs.len() > 5 {
                    return Err(Error::param("coeffs", coeffs.len() as f64, "1 to 5 coefficients (degree <= 4)"));
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::Invalid("polynomial coefficients must be finite".into()));
                }
            }
            Direction::Cos { omega } | Direction::Sin { omega } => {
                if !omega.is_finite() {
                    return Err(Error::param("omega", *omega, "finite reals"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Direction::Poly { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
            Direction::Cos { omega } => (omega * t).cos(),
            Direction::Sin { omega } => (omega * t).sin(),
        }
    }

    /// Values at the cell midpoints.
    pub fn sample(&self, grid: &DyadicGrid) -> Vec<f64> {
        grid.midpoints().iter().map(|&m| self.eval(m)).collect()
    }

    /// An upper bound of `sup_{[0,T]} |h|`.
    pub fn sup_bound(&self, horizon: f64) -> f64 {
        match self {
            Direction::Poly { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(i, c)| c.abs() * horizon.powi(i as i32))
                .sum(),
            _ => 1.0,
        }
    }
}

/// `F = φ(Σ_i a_i I(h_i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylindricalVariable {
    profile: Profile,
    weights: Vec<f64>,
    directions: Vec<Direction>,
}

impl CylindricalVariable {
    pub fn new(profile: Profile, weights: Vec<f64>, directions: Vec<Direction>) -> Result<Self> {
        if weights.len() != directions.len() {
            return Err(Error::LengthMismatch {
                expected: directions.len(),
                actual: weights.len(),
            });
        }
        if weights.iter().any(|a| !a.is_finite()) {
            return Err(Error::Invalid("ridge weights must be finite".into()));
        }
        if let Profile::Const(c) = profile {
            if !c.is_finite() {
                return Err(Error::param("value", c, "finite reals"));
            }
        }
        for d in &directions {
            d.validate()?;
        }
        Ok(Self {
            profile,
            weights,
            directions,
        })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(Profile::Const(c), vec![], vec![])
    }

    pub fn ridge(profile: Profile, weights: Vec<f64>, directions: Vec<Direction>) -> Result<Self> {
        Self::new(profile, weights, directions)
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.profile, Profile::Const(_)) || self.weights.is_empty()
    }

    /// `h̄(x) = Σ_i a_i h_i(x)`.
    pub fn combined_direction_at(&self, x: f64) -> f64 {
        self.weights.iter().zip(&self.directions).map(|(a, h)| a * h.eval(x)).sum()
    }

    /// `h̄` at the cell midpoints.
    pub fn combined_direction(&self, grid: &DyadicGrid) -> Vec<f64> {
        grid.midpoints().iter().map(|&m| self.combined_direction_at(m)).collect()
    }

    /// `A = Σ_i a_i I(h_i)`.
    pub fn argument(&self, w: &NoisePath) -> Result<f64> {
        wiener_integral(&self.combined_direction(w.grid()), w)
    }

    /// `sup_x |D^ℓ F(x)|` from the catalog bound of `φ^(ℓ)` and the direction bounds.
    pub fn derivative_bound(&self, ell: usize, horizon: f64) -> Result<f64> {
        let hb: f64 = self
            .weights
            .iter()
            .zip(&self.directions)
            .map(|(a, h)| a.abs() * h.sup_bound(horizon))
            .sum();
        Ok(self.profile.bound(ell)? * hb.powi(ell as i32))
    }
}

/// `F = c + I(h)`, outside the catalog because `x ↦ x` is unbounded. Used to
/// check the pull-out expansion against the first-chaos product formula.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineVariable {
    pub intercept: f64,
    pub direction: Direction,
}

/// Coefficient of one segment of an elementary process.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Cylindrical(CylindricalVariable),
    Affine(AffineVariable),
}

impl From<CylindricalVariable> for Coefficient {
    fn from(f: CylindricalVariable) -> Self {
        Coefficient::Cylindrical(f)
    }
}

impl From<AffineVariable> for Coefficient {
    fn from(f: AffineVariable) -> Self {
        Coefficient::Affine(f)
    }
}

impl Coefficient {
    pub fn is_deterministic(&self) -> bool {
        match self {
            Coefficient::Cylindrical(f) => f.is_deterministic(),
            Coefficient::Affine(_) => false,
        }
    }

    /// `h̄` at the cell midpoints.
    pub fn combined_direction(&self, grid: &DyadicGrid) -> Vec<f64> {
        match self {
            Coefficient::Cylindrical(f) => f.combined_direction(grid),
            Coefficient::Affine(f) => f.direction.sample(grid),
        }
    }

    /// `φ^(ℓ)(A)`.
    pub fn profile_derivative(&self, ell: usize, arg: f64) -> Result<f64> {
        match self {
            Coefficient::Cylindrical(f) => {
                if f.weights.is_empty() {
                    Profile::Const(f.profile.derivative(0, 0.0)?).derivative(ell, arg)
                } else {
                    f.profile.derivative(ell, arg)
                }
            }
            Coefficient::Affine(f) => Ok(match ell {
                0 => f.intercept + arg,
                1 => 1.0,
                _ => 0.0,
            }),
        }
    }

    pub fn realize(&self, w: &NoisePath) -> Result<f64> {
        let arg = wiener_integral(&self.combined_direction(w.grid()), w)?;
        self.profile_derivative(0, arg)
    }
}

/// `φ(Σ a_i I(h_i))` on one noise path.
pub fn realize(f: &CylindricalVariable, w: &NoisePath) -> Result<f64> {
    f.profile.derivative(0, if f.weights.is_empty() { 0.0 } else { f.argument(w)? })
}

/// `D^ℓ F(x) = φ^(ℓ)(A) Π_j h̄(x_j)`.
pub fn malliavin_derivative(f: &CylindricalVariable, ell: usize, w: &NoisePath, x: &[f64]) -> Result<f64> {
    if x.len() != ell {
        return Err(Error::LengthMismatch {
            expected: ell,
            actual: x.len(),
        });
    }
    let horizon = w.grid().horizon();
    for &xi in x {
        if !(0.0..=horizon).contains(&xi) {
            return Err(Error::OutOfRange { value: xi, horizon });
        }
    }
    let scalar = Coefficient::Cylindrical(f.clone()).profile_derivative(ell, f.argument(w)?)?;
    Ok(scalar * x.iter().map(|&xi| f.combined_direction_at(xi)).product::<f64>())
}

/// `g = Σ_j F_j 1_{[s_j, s_{j+1})}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementaryProcess {
    partition: Partition,
    coefficients: Vec<Coefficient>,
}

impl ElementaryProcess {
    pub fn new(partition: Partition, coefficients: Vec<Coefficient>) -> Result<Self> {
        if coefficients.len() != partition.segments() {
            return Err(Error::LengthMismatch {
                expected: partition.segments(),
                actual: coefficients.len(),
            });
        }
        Ok(Self {
            partition,
            coefficients,
        })
    }

    /// Deterministic step function with the given values.
    pub fn deterministic(partition: Partition, values: &[f64]) -> Result<Self> {
        let coefficients = values
            .iter()
            .map(|&v| CylindricalVariable::constant(v).map(Coefficient::from))
            .collect::<Result<Vec<_>>>()?;
        Self::new(partition, coefficients)
    }

    /// `g ≡ 1` on `[0, T]`.
    pub fn one(horizon: f64) -> Result<Self> {
        Self::deterministic(Partition::new(vec![0.0, horizon])?, &[1.0])
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn coefficients(&self) -> &[Coefficient] {
        &self.coefficients
    }

    pub fn is_deterministic(&self) -> bool {
        self.coefficients.iter().all(Coefficient::is_deterministic)
    }

    /// Values of a deterministic process, `None` otherwise.
    pub fn deterministic_values(&self) -> Option<Vec<f64>> {
        self.coefficients
            .iter()
            .map(|c| match c {
                Coefficient::Cylindrical(f) if f.is_deterministic() => f.profile.derivative(0, 0.0).ok(),
                _ => None,
            })
            .collect()
    }

    /// `∫_0^T |g_s|^q ds` on one noise path.
    pub fn lq_integral(&self, q: f64, w: &NoisePath) -> Result<f64> {
        let mut acc = 0.0;
        for (seg, c) in self.partition.points().windows(2).zip(&self.coefficients) {
            if seg[1] > seg[0] {
                acc += c.realize(w)?.abs().powf(q) * (seg[1] - seg[0]);
            }
        }
        Ok(acc)
    }
}

struct SegmentPlan {
    cells: Range<usize>,
    coefficient: Coefficient,
    direction: Option<(Vec<f64>, DirectionTable)>,
}

/// Skorokhod integrals `∫ g δZ` of one elementary process, with the
/// per-segment direction tables cached for reuse across noise paths.
pub struct SkorokhodIntegrator<'a> {
    rules: &'a CellRules,
    segments: Vec<SegmentPlan>,
}

impl<'a> SkorokhodIntegrator<'a> {
    pub fn new(rules: &'a CellRules, g: &ElementaryProcess) -> Result<Self> {
        let grid = rules.grid();
        let idx = g.partition.node_indices(grid)?;
        if !g.partition.spans(grid) {
            return Err(Error::Invalid("integrand partition must span [0, T]".into()));
        }
        let k = rules.params().k;
        let mut segments = Vec::new();
        for (w, c) in idx.windows(2).zip(&g.coefficients) {
            if w[1] == w[0] {
                continue;
            }
            let cells = w[0]..w[1];
            let direction = if c.is_deterministic() {
                None
            } else {
                for ell in 0..=k {
                    c.profile_derivative(ell, 0.0)?;
                }
                let h = c.combined_direction(grid);
                let table = rules.direction(&h, cells.clone());
                Some((h, table))
            };
            segments.push(SegmentPlan {
                cells,
                coefficient: c.clone(),
                direction,
            });
        }
        Ok(Self { rules, segments })
    }

    pub fn rules(&self) -> &CellRules {
        self.rules
    }

    /// Contribution of every cell: `∫_0^{t_{c+1}} g δZ - ∫_0^{t_c} g δZ`.
    pub fn cell_contributions(&self, w: &NoisePath) -> Result<Vec<f64>> {
        if w.grid() != self.rules.grid() {
            return Err(Error::GridMismatch);
        }
        let xi = w.increments();
        let k = self.rules.params().k;
        let mut out = vec![0.0; xi.len()];
        for seg in &self.segments {
            match &seg.direction {
                None => {
                    let v = seg.coefficient.profile_derivative(0, 0.0)?;
                    for c in seg.cells.clone() {
                        out[c] = v * self.rules.cell_increment(c, xi);
                    }
                }
                Some((h, table)) => {
                    let arg = wiener_integral(h, w)?;
                    let mut coef = [0.0; 4];
                    for (ell, v) in coef.iter_mut().enumerate().take(k + 1) {
                        let sign = if ell % 2 == 0 { 1.0 } else { -1.0 };
                        *v = sign * binomial(k, ell) * seg.coefficient.profile_derivative(ell, arg)?;
                    }
                    for c in seg.cells.clone() {
                        let m = self.rules.mixed(c, xi, table);
                        out[c] = (0..=k).map(|ell| coef[ell] * m[ell]).sum();
                    }
                }
            }
        }
        Ok(out)
    }

    /// `∫_{t0}^{t1} g δZ`; both ends must be grid nodes.
    pub fn integral(&self, w: &NoisePath, window: (f64, f64)) -> Result<f64> {
        let r = window_cells(self.rules.grid(), window)?;
        Ok(self.cell_contributions(w)?[r].iter().sum())
    }

    /// `t ↦ ∫_0^t g δZ` at every grid node.
    pub fn path(&self, w: &NoisePath) -> Result<PathSample> {
        PathSample::from_increments(*self.rules.grid(), &self.cell_contributions(w)?)
    }
}

fn window_cells(grid: &DyadicGrid, window: (f64, f64)) -> Result<Range<usize>> {
    let (t0, t1) = window;
    for t in [t0, t1] {
        if !(0.0..=grid.horizon()).contains(&t) {
            return Err(Error::OutOfRange {
                value: t,
                horizon: grid.horizon(),
            });
        }
    }
    if t1 < t0 {
        return Err(Error::Invalid(format!("window [{t0}, {t1}] is reversed")));
    }
    let i0 = grid.node_index(t0).ok_or(Error::Unaligned { value: t0 })?;
    let i1 = grid.node_index(t1).ok_or(Error::Unaligned { value: t1 })?;
    Ok(i0..i1)
}

/// `∫_{t0}^{t1} g δZ^{H,k}` on one noise path, building the quadrature tables
/// on the noise grid. Use [`SkorokhodIntegrator`] to amortize them.
pub fn skorokhod_integral(
    p: &HermiteParams,
    g: &ElementaryProcess,
    w: &NoisePath,
    window: (f64, f64),
) -> Result<f64> {
    let rules = CellRules::new(*p, *w.grid())?;
    SkorokhodIntegrator::new(&rules, g)?.integral(w, window)
}

/// The same integral through dense kernel tensors: per segment, the
/// transfer tensor of the segment indicator is contracted against `h̄`
/// and integrated with the scheme's multiple integral. Costs `O(N^k)` per
/// term; meant for cross-checks.
pub fn skorokhod_integral_dense(
    rules: &CellRules,
    g: &ElementaryProcess,
    w: &NoisePath,
    window: (f64, f64),
) -> Result<f64> {
    let grid = *rules.grid();
    if *w.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let win = window_cells(&grid, window)?;
    let idx = g.partition.node_indices(&grid)?;
    let k = rules.params().k;
    let scheme = rules.scheme();
    let mut total = 0.0;
    for (seg, c) in idx.windows(2).zip(&g.coefficients) {
        let lo = seg[0].max(win.start);
        let hi = seg[1].min(win.end);
        if hi <= lo {
            continue;
        }
        let mut ind = vec![0.0; grid.cells()];
        ind[lo..hi].iter_mut().for_each(|v| *v = 1.0);
        let u = KernelTensor::new(k, grid, rules.transfer_values(&ind))?;
        let h = c.combined_direction(&grid);
        let arg = wiener_integral(&h, w)?;
        for ell in 0..=k {
            let d = c.profile_derivative(ell, arg)?;
            if d == 0.0 {
                continue;
            }
            let sign = if ell % 2 == 0 { 1.0 } else { -1.0 };
            let con = scheme_contraction(scheme, &u, &h, ell)?;
            total += sign * binomial(k, ell) * d * scheme_integral(scheme, &con, w)?;
        }
    }
    Ok(total)
}

/// First-chaos product formula `δ(F u) = F I(u) - <h, u>` for `F = c + I(h)`
/// and `u` the transfer of `1_{[s0, s1)}`, computed from the dense order-one
/// tensor without the expansion code.
pub fn affine_product_oracle(
    rules: &CellRules,
    f: &AffineVariable,
    segment: (f64, f64),
    w: &NoisePath,
) -> Result<f64> {
    let grid = *rules.grid();
    if rules.params().k != 1 {
        return Err(Error::param("k", rules.params().k as f64, "{1}"));
    }
    let step = StepFunction::new(
        Partition::new(
            [0.0, segment.0, segment.1, grid.horizon()]
                .into_iter()
                .collect(),
        )?,
        vec![0.0, 1.0, 0.0],
    )?;
    let u = KernelTensor::new(1, grid, rules.transfer_values(&cell_values(&grid, &step)?))?;
    let h = f.direction.sample(&grid);
    let iu = wiener_integral(u.values(), w)?;
    let ih = wiener_integral(&h, w)?;
    let inner: f64 = h.iter().zip(u.values()).map(|(a, b)| a * b).sum::<f64>() * grid.step();
    Ok((f.intercept + ih) * iu - inner)
}

/// Both sides of `E[F δ^k(f)] = E<D^k F, f>` with standard errors; `diff`
/// summarizes the paired per-replicate difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Duality {
    pub lhs: Summary,
    pub rhs: Summary,
    pub diff: Summary,
}

impl Duality {
    /// Whether `|lhs - rhs|` is within `z` standard errors of the paired difference.
    pub fn holds(&self, z: f64) -> bool {
        let se = self.diff.stderr.unwrap_or(0.0);
        self.diff.mean.abs() <= z * se
    }
}

/// Monte Carlo duality check on the grid of `f`. The multiple integral and
/// the inner product follow `scheme`: off-diagonal for the midpoint scheme,
/// all index tuples for the projected one.
pub fn duality_check(
    f_var: &CylindricalVariable,
    f: &KernelTensor,
    scheme: Scheme,
    replicates: usize,
    seed: u64,
) -> Result<Duality> {
    let grid = *f.grid();
    let k = f.order();
    let coef = Coefficient::Cylindrical(f_var.clone());
    coef.profile_derivative(k, 0.0)?;
    let h = coef.combined_direction(&grid);
    let pairing = scheme_contraction(scheme, f, &h, k)?.values()[0];
    let rows = par_replicates(replicates, |r| -> Result<(f64, f64)> {
        let w = sample_noise(SeedSpec::new(seed, r), &grid);
        let arg = wiener_integral(&h, &w)?;
        let lhs = coef.profile_derivative(0, arg)? * scheme_integral(scheme, f, &w)?;
        let rhs = coef.profile_derivative(k, arg)? * pairing;
        Ok((lhs, rhs))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let lhs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let diff: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    Ok(Duality {
        lhs: Summary::of(&lhs),
        rhs: Summary::of(&rhs),
        diff: Summary::of(&diff),
    })
}

/// Monte Carlo `(E|F|^p + Σ_{1≤ℓ≤k} E‖D^ℓ F‖^p_{L²})^{1/p}` with the
/// discrete `L²` norm on the grid.
pub fn sobolev_norm_estimate(
    f: &CylindricalVariable,
    grid: &DyadicGrid,
    k: usize,
    p: f64,
    replicates: usize,
    seed: u64,
) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::param("p", p, "[1, inf)"));
    }
    if k > MAX_DERIVATIVE {
        return Err(Error::param("k", k as f64, "[0, 3]"));
    }
    let coef = Coefficient::Cylindrical(f.clone());
    let h = coef.combined_direction(grid);
    let hnorm = (h.iter().map(|v| v * v).sum::<f64>() * grid.step()).sqrt();
    let vals = par_replicates(replicates, |r| -> Result<f64> {
        let w = sample_noise(SeedSpec::new(seed, r), grid);
        let arg = wiener_integral(&h, &w)?;
        let mut acc = coef.profile_derivative(0, arg)?.abs().powf(p);
        for ell in 1..=k {
            acc += (coef.profile_derivative(ell, arg)?.abs() * hnorm.powi(ell as i32)).powf(p);
        }
        Ok(acc)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Summary::of(&vals).mean.powf(1.0 / p))
}

/// `L^q(Ω)` norms of `∫_0^{T 2^{-m}} δZ` and the fitted power of the window length.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub lengths: Vec<f64>,
    pub norms: Vec<f64>,
    pub exponent: f64,
}

/// Windowed-norm scaling of the integral of `g ≡ 1` in `L^{1/H}(Ω)` over
/// windows `[0, T 2^{-m}]`.
pub fn windowed_norm_scaling(rules: &CellRules, ms: &[u32], replicates: usize, seed: u64) -> Result<ScalingFit> {
    let grid = *rules.grid();
    let q = 1.0 / rules.params().h;
    let integ = SkorokhodIntegrator::new(rules, &ElementaryProcess::one(grid.horizon())?)?;
    let lengths: Vec<f64> = ms
        .iter()
        .map(|&m| grid.level_node(m, 1))
        .collect::<Result<Vec<_>>>()?;
    let rows = par_replicates(replicates, |r| -> Result<Vec<f64>> {
        let w = sample_noise(SeedSpec::new(seed, r), &grid);
        let path = integ.path(&w)?;
        Ok(ms
            .iter()
            .map(|&m| path.at(grid.level_stride(m).unwrap()).abs().powf(q))
            .collect())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let norms: Vec<f64> = (0..ms.len())
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            Summary::of(&col).mean.powf(1.0 / q)
        })
        .collect();
    let lx: Vec<f64> = lengths.iter().map(|l| l.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|n| n.ln()).collect();
    Ok(ScalingFit {
        exponent: ols_slope(&lx, &ly),
        lengths,
        norms,
    })
}

/// One segment of an integrand document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SegmentSpec {
    Const {
        value: f64,
    },
    Ridge {
        profile: ProfileName,
        weights: Vec<f64>,
        directions: Vec<Direction>,
    },
}

/// Serializable description of an elementary process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrandDocument {
    pub partition: Vec<f64>,
    pub segments: Vec<SegmentSpec>,
}

impl IntegrandDocument {
    pub fn to_process(&self) -> Result<ElementaryProcess> {
        let coefficients = self
            .segments
            .iter()
            .map(|s| match s {
                SegmentSpec::Const { value } => CylindricalVariable::constant(*value),
                SegmentSpec::Ridge {
                    profile,
                    weights,
                    directions,
                } => CylindricalVariable::ridge((*profile).into(), weights.clone(), directions.clone()),
            }
            .map(Coefficient::from))
            .collect::<Result<Vec<_>>>()?;
        ElementaryProcess::new(Partition::new(self.partition.clone())?, coefficients)
    }
}
