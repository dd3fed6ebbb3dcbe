//! Deterministic kernels of the Hermite process: the constant `c_{H,k}`, the
//! kernel `L_t`, the transfer operator of step functions, the two-point
//! function `K(u, v)`, and the reduced kernels `g^ℓ`.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DyadicGrid, Partition};
use crate::special_math::{
    beta_fn, factorial, fixed_graded, singular_integral, Integrand, Node, QuadratureSpec,
};

/// Coordinates closer than this to the largest one are merged with it.
pub const MERGE_TOL: f64 = 1e-12;

/// Hurst index and order of one Hermite process with its derived exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteParams {
    pub h: f64,
    pub k: usize,
    /// `1/2 - (1-H)/k`
    pub a: f64,
    /// `1/2 + (1-H)/k`
    pub b: f64,
    /// `c_{H,k}`
    pub c: f64,
}

impl HermiteParams {
    pub fn new(h: f64, k: usize) -> Result<Self> {
        let c = c_constant(h, k)?;
        let d = (1.0 - h) / k as f64;
        Ok(Self {
            h,
            k,
            a: 0.5 - d,
            b: 0.5 + d,
            c,
        })
    }

    /// `B(a, 2(1-H)/k)`, the Beta factor shared by `c_{H,k}` and `K(u, v)`.
    pub fn beta_factor(&self) -> f64 {
        beta_fn(self.a, 2.0 * (1.0 - self.h) / self.k as f64).expect("exponents are positive")
    }
}

pub fn c_constant(h: f64, k: usize) -> Result<f64> {
    if !(h > 0.5 && h < 1.0) {
        return Err(Error::param("H", h, "(1/2, 1)"));
    }
    if k < 1 {
        return Err(Error::param("k", k as f64, "[1, inf)"));
    }
    let d = (1.0 - h) / k as f64;
    let beta = beta_fn(0.5 - d, 2.0 * d)?;
    Ok((h * (2.0 * h - 1.0) / (factorial(k) * beta.powi(k as i32))).sqrt())
}

/// `R_H(s, t) = (s^{2H} + t^{2H} - |s-t|^{2H}) / 2`.
pub fn fbm_covariance(h: f64, s: f64, t: f64) -> f64 {
    0.5 * (s.powf(2.0 * h) + t.powf(2.0 * h) - (s - t).abs().powf(2.0 * h))
}

/// Piecewise constant function `Σ_j g_j 1_{[s_j, s_{j+1})}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    partition: Partition,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn new(partition: Partition, values: Vec<f64>) -> Result<Self> {
        if values.len() != partition.segments() {
            return Err(Error::LengthMismatch {
                expected: partition.segments(),
                actual: values.len(),
            });
        }
        Ok(Self { partition, values })
    }

    /// `1_{[0, t)}` on `[0, T]`.
    pub fn indicator(t: f64, horizon: f64) -> Result<Self> {
        if t >= horizon {
            return Self::new(Partition::new(vec![0.0, horizon])?, vec![1.0]);
        }
        Self::new(Partition::new(vec![0.0, t, horizon])?, vec![1.0, 0.0])
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.partition
            .points()
            .windows(2)
            .zip(&self.values)
            .map(|(w, &g)| (w[0], w[1], g))
    }
}

fn check_point(p: &HermiteParams, x: &[f64]) -> Result<()> {
    if x.len() != p.k {
        return Err(Error::LengthMismatch {
            expected: p.k,
            actual: x.len(),
        });
    }
    for &xi in x {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::param("x", xi, "(0, T]"));
        }
    }
    Ok(())
}

/// `∫_{lo}^{hi} Π_i (u/x_i)^a (u - x_i)_+^{-b} du` without the constant.
///
/// The integrand vanishes below `max(x)`. When the lower limit is `max(x)`
/// itself, coordinates within [`MERGE_TOL`] of the maximum are merged into a
/// single factor with exponent `-b * multiplicity`.
fn segment_integral(a: f64, b: f64, x: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= m || hi <= lo {
        return Ok(0.0);
    }
    let start = lo.max(m);
    let at_max = start == m;
    let mut mult = 0usize;
    let mut base = Vec::with_capacity(x.len());
    for &xi in x {
        if at_max && m - xi <= MERGE_TOL {
            mult += 1;
        } else {
            base.push((xi, start - xi));
        }
    }
    let exponent = -b * mult as f64;
    if exponent <= -1.0 {
        return Err(Error::NonIntegrable { exponent });
    }
    let merged_scale = m.powf(-a * mult as f64);
    let f = Integrand::new(|n: Node| {
        let u = start + n.from_left;
        let mut v = if mult > 0 {
            u.powf(a * mult as f64) * merged_scale * n.from_left.powf(exponent)
        } else {
            1.0
        };
        for &(xi, d) in &base {
            v *= (u / xi).powf(a) * (d + n.from_left).powf(-b);
        }
        v
    })
    .singular_left(exponent);
    Ok(singular_integral(&f, (start, hi), &QuadratureSpec::default())?.value)
}

/// `L_t(x) = c ∫_{max x}^t Π_i (u/x_i)^a (u - x_i)^{-b} du`, zero when `max x ≥ t`.
pub fn kernel_lt(p: &HermiteParams, t: f64, x: &[f64]) -> Result<f64> {
    check_point(p, x)?;
    Ok(p.c * segment_integral(p.a, p.b, x, 0.0, t)?)
}

/// Image of a step function under the transfer operator, evaluated at `x`.
/// The partition must be aligned to `grid`.
pub fn transfer_operator(
    p: &HermiteParams,
    grid: &DyadicGrid,
    g: &StepFunction,
    x: &[f64],
) -> Result<f64> {
    check_point(p, x)?;
    g.partition().node_indices(grid)?;
    let mut acc = 0.0;
    for (lo, hi, gj) in g.segments() {
        if gj != 0.0 {
            acc += gj * segment_integral(p.a, p.b, x, lo, hi)?;
        }
    }
    Ok(p.c * acc)
}

fn check_pair(u: f64, v: f64) -> Result<()> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::param("u", u, "(0, T]"));
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::param("v", v, "(0, T]"));
    }
    if u == v {
        return Err(Error::Invalid("K(u, v) is singular at u = v".into()));
    }
    Ok(())
}

/// `K(u, v) = B(a, 2(1-H)/k)^k |u - v|^{2H-2}`.
pub fn k_closed_form(p: &HermiteParams, u: f64, v: f64) -> Result<f64> {
    check_pair(u, v)?;
    Ok(p.beta_factor().powi(p.k as i32) * (u - v).abs().powf(2.0 * p.h - 2.0))
}

/// `((uv)^a ∫_0^{u∧v} x^{-2a} (u-x)^{-b} (v-x)^{-b} dx)^k` by quadrature.
pub fn k_quadrature_form(p: &HermiteParams, u: f64, v: f64) -> Result<f64> {
    check_pair(u, v)?;
    let (lo, hi) = if u < v { (u, v) } else { (v, u) };
    let gap = hi - lo;
    let (a, b) = (p.a, p.b);
    let f = Integrand::new(|n: Node| {
        n.x.powf(-2.0 * a) * n.from_right.powf(-b) * (gap + n.from_right).powf(-b)
    })
    .singular_left(-2.0 * a)
    .singular_right(-b);
    let inner = singular_integral(&f, (0.0, lo), &QuadratureSpec::default())?.value;
    Ok(((u * v).powf(a) * inner).powi(p.k as i32))
}

/// `k! <L_s, L_t>` over `[0, T]^k`, reduced through `K(u, v)` to
/// `k! c^2 B^k ∫_0^s ∫_0^t |u - v|^{2H-2} dv du`. The inner integral is done by
/// graded quadrature split at the diagonal, the outer one by refined graded
/// quadrature split at `t`.
pub fn kernel_covariance(p: &HermiteParams, s: f64, t: f64) -> Result<f64> {
    if !(s > 0.0 && t > 0.0) {
        return Err(Error::Invalid("kernel covariance needs s, t > 0".into()));
    }
    let e = 2.0 * p.h - 2.0;
    let inner = |u: f64| -> Result<f64> {
        let lo = u.min(t);
        let left = Integrand::new(|n: Node| n.from_right.powf(e)).singular_right(e);
        let mut acc = fixed_graded(&left, 0.0, lo, 40, 0.5)?;
        if u < t {
            let right = Integrand::new(|n: Node| n.from_left.powf(e)).singular_left(e);
            acc += fixed_graded(&right, u, t, 40, 0.5)?;
        } else if u > t {
            let gap = u - t;
            let tail = Integrand::new(|n: Node| (gap + n.from_right).powf(e));
            acc = fixed_graded(&tail.singular_right(0.0), 0.0, t, 40, 0.5)?;
        }
        Ok(acc)
    };
    let err = RefCell::new(None);
    let outer = |lo: f64, hi: f64| -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let f = Integrand::new(|n: Node| match inner(n.x) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        })
        .singular_left(0.0)
        .singular_right(0.0);
        match singular_integral(&f, (lo, hi), &QuadratureSpec::default().with_tolerance(1e-8)) {
            Ok(q) => q.value,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let i = outer(0.0, s.min(t)) + outer(s.min(t), s);
    if let Some(e) = err.take() {
        return Err(e);
    }
    let k = p.k as i32;
    Ok(factorial(p.k) * p.c * p.c * p.beta_factor().powi(k) * i)
}

/// The same double integral in closed form, for reference.
pub fn kernel_covariance_exact_reduction(p: &HermiteParams, s: f64, t: f64) -> f64 {
    let e = 2.0 * p.h - 1.0;
    let i = (s.powf(e + 1.0) + t.powf(e + 1.0) - (s - t).abs().powf(e + 1.0)) / (e * (e + 1.0));
    factorial(p.k) * p.c * p.c * p.beta_factor().powi(p.k as i32) * i
}

/// `‖L_t‖^2` for `k = 1` by one-dimensional quadrature of `kernel_lt(t, ·)^2`.
pub fn kernel_norm_sq_k1(p: &HermiteParams, t: f64, cells: usize) -> Result<f64> {
    if p.k != 1 {
        return Err(Error::param("k", p.k as f64, "{1}"));
    }
    let err = RefCell::new(None);
    let f = Integrand::new(|n: Node| match kernel_lt(p, t, &[n.x]) {
        Ok(v) => v * v,
        Err(e) => {
            err.borrow_mut().get_or_insert(e);
            f64::NAN
        }
    })
    .singular_left(-2.0 * p.a)
    .singular_right(2.0 * (1.0 - p.b));
    let v = fixed_graded(&f, 0.0, t, cells, 0.5)?;
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// `H'`, `c_ℓ` and the order-ℓ reduced kernel of a parent process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedKernelParams {
    pub parent: HermiteParams,
    pub level: usize,
    pub h_prime: f64,
    pub c_ell: f64,
}

impl ReducedKernelParams {
    pub fn new(parent: HermiteParams, level: usize) -> Result<Self> {
        if level < 1 || level >= parent.k {
            return Err(Error::param(
                "level",
                level as f64,
                format!("[1, {}]", parent.k as i64 - 1),
            ));
        }
        let frac = level as f64 / parent.k as f64;
        let h_prime = parent.h * (1.0 - frac) + frac;
        let c_ell = parent.c / c_constant(h_prime, parent.k - level)?;
        Ok(Self {
            parent,
            level,
            h_prime,
            c_ell,
        })
    }
}

/// `g^ℓ(x, u) = c_ℓ Π_{i ≤ ℓ} (u/x_i)^a (u - x_i)_+^{-b}` with the parent's exponents.
pub fn gl_kernel(r: &ReducedKernelParams, x: &[f64], u: f64) -> Result<f64> {
    if x.len() != r.level {
        return Err(Error::LengthMismatch {
            expected: r.level,
            actual: x.len(),
        });
    }
    let (a, b) = (r.parent.a, r.parent.b);
    let mut v = r.c_ell;
    for &xi in x {
        if xi >= u {
            return Ok(0.0);
        }
        v *= (u / xi).powf(a) * (u - xi).powf(-b);
    }
    Ok(v)
}

/// `∫_{[0,T]^ℓ} (∫_0^T |g^ℓ(x, u)|^{1/H'} du)^{H'} dx` by nested graded
/// quadrature with `cells` geometric cells per graded side, for ℓ ∈ {1, 2}.
pub fn gl_integrability(r: &ReducedKernelParams, horizon: f64, cells: usize) -> Result<f64> {
    const RATIO: f64 = 0.25;
    let q = 1.0 / r.h_prime;
    let (a, b) = (r.parent.a, r.parent.b);
    let c = r.c_ell.powf(q);
    match r.level {
        1 => {
            let inner = |x: f64| -> f64 {
                let f = Integrand::new(|n: Node| {
                    let u = x + n.from_left;
                    (u / x).powf(a * q) * n.from_left.powf(-b * q)
                })
                .singular_left(-b * q);
                fixed_graded(&f, x, horizon, cells, RATIO).unwrap_or(f64::NAN)
            };
            let outer = Integrand::new(|n: Node| (c * inner(n.x)).powf(r.h_prime))
                .singular_left(-a)
                .singular_right(r.h_prime - b);
            let v = fixed_graded(&outer, 0.0, horizon, cells, RATIO)?;
            finite(v)
        }
        2 => {
            // Symmetric in (x1, x2): twice the integral over x1 < x2.
            let inner = |x1: f64, x2: f64| -> f64 {
                let d = x2 - x1;
                let f = Integrand::new(|n: Node| {
                    let u = x2 + n.from_left;
                    ((u / x1) * (u / x2)).powf(a * q)
                        * ((d + n.from_left) * n.from_left).powf(-b * q)
                })
                .singular_left(-b * q);
                fixed_graded(&f, x2, horizon, cells, RATIO).unwrap_or(f64::NAN)
            };
            // Near the diagonal the merged factor behaves like d^{1 - 2bq}.
            let diag = r.h_prime * (1.0 - 2.0 * b * q).min(0.0);
            let middle = |x2: f64| -> f64 {
                let f = Integrand::new(|n: Node| (c * inner(n.x, x2)).powf(r.h_prime))
                    .singular_left(-a)
                    .singular_right(diag);
                fixed_graded(&f, 0.0, x2, cells, RATIO).unwrap_or(f64::NAN)
            };
            let outer = Integrand::new(|n: Node| middle(n.x))
                .singular_left(-a)
                .singular_right(0.0);
            let v = 2.0 * fixed_graded(&outer, 0.0, horizon, cells, RATIO)?;
            finite(v)
        }
        l => Err(Error::param("level", l as f64, "{1, 2}")),
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Invalid("nested quadrature produced a non-finite value".into()))
    }
}

/// For each `x`, `x^ε ∫_0^T (y + x)^{-(a+θ)} y^{-(1-a)} dy`.
pub fn aux_integral_ratio(
    horizon: f64,
    a: f64,
    theta: f64,
    eps: f64,
    x_grid: &[f64],
) -> Result<Vec<f64>> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::param("a", a, "(0, 1)"));
    }
    if !(theta >= 0.0) {
        return Err(Error::param("theta", theta, "[0, inf)"));
    }
    if !(eps > theta && eps < a + theta) {
        return Err(Error::param("eps", eps, format!("({theta}, {})", a + theta)));
    }
    x_grid
        .iter()
        .map(|&x| {
            if !(x > 0.0) {
                return Err(Error::param("x", x, "(0, T]"));
            }
            let f = Integrand::new(|n: Node| (n.x + x).powf(-(a + theta)) * n.x.powf(a - 1.0))
                .singular_left(a - 1.0);
            let q = singular_integral(&f, (0.0, horizon), &QuadratureSpec::default())?;
            Ok(q.value * x.powf(eps))
        })
        .collect()
}
