//! Gamma and Beta functions, Gaussian absolute moments, and composite
//! Gauss-Legendre quadrature on meshes graded toward endpoint power
//! singularities.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(x: f64) -> f64 {
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    a
}

/// Gamma function for real arguments (poles at non-positive integers give inf/NaN).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * lanczos_sum(x)
    }
}

/// `ln |Γ(x)|`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        (PI / (PI * x).sin().abs()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let t = x + LANCZOS_G + 0.5;
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + lanczos_sum(x).ln()
    }
}

pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::param("a", a, "(0, inf)"));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::param("b", b, "(0, inf)"));
    }
    Ok((ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp())
}

/// `E|N(0,1)|^p = 2^{p/2} Γ((p+1)/2) / sqrt(pi)`.
pub fn gaussian_abs_moment(p: f64) -> Result<f64> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::param("p", p, "[0, inf)"));
    }
    Ok((0.5 * p * 2f64.ln() + ln_gamma(0.5 * (p + 1.0)) - 0.5 * PI.ln()).exp())
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

pub(crate) fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadratureScheme {
    GradedGeometric,
    PlainComposite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: QuadratureScheme,
    pub cells: usize,
    pub ratio: f64,
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            scheme: QuadratureScheme::GradedGeometric,
            cells: 40,
            ratio: 0.5,
            tolerance: 1e-10,
        }
    }
}

impl QuadratureSpec {
    /// Refinement stops with an error once the cell count would exceed this.
    pub const CELL_CAP: usize = 5120;

    pub fn validate(&self) -> Result<()> {
        if self.cells < 4 {
            return Err(Error::param("cells", self.cells as f64, "[4, inf)"));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::param("ratio", self.ratio, "(0, 1)"));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-2) {
            return Err(Error::param("tolerance", self.tolerance, "(0, 1e-2]"));
        }
        Ok(())
    }

    pub fn with_tolerance(self, tolerance: f64) -> Self {
        Self { tolerance, ..self }
    }
}

/// Quadrature node with its exact distances to both interval ends, so that
/// integrands can form `(x - a)` and `(b - x)` without cancellation.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: f64,
    pub from_left: f64,
    pub from_right: f64,
}

/// An integrand with optional power-law endpoint behaviour `|x - e|^β`.
pub struct Integrand<F> {
    f: F,
    left: Option<f64>,
    right: Option<f64>,
}

impl<F: Fn(Node) -> f64> Integrand<F> {
    pub fn new(f: F) -> Self {
        Self {
            f,
            left: None,
            right: None,
        }
    }

    pub fn singular_left(mut self, exponent: f64) -> Self {
        self.left = Some(exponent);
        self
    }

    pub fn singular_right(mut self, exponent: f64) -> Self {
        self.right = Some(exponent);
        self
    }

    pub fn left_exponent(&self) -> Option<f64> {
        self.left
    }

    pub fn right_exponent(&self) -> Option<f64> {
        self.right
    }

    fn check(&self) -> Result<()> {
        for e in [self.left, self.right].into_iter().flatten() {
            if !(e > -1.0) {
                return Err(Error::NonIntegrable { exponent: e });
            }
        }
        Ok(())
    }

    fn eval(&self, a: f64, b: f64, dl: f64) -> f64 {
        (self.f)(Node {
            x: a + dl,
            from_left: dl,
            from_right: (b - a) - dl,
        })
    }

    fn eval_right(&self, a: f64, b: f64, dr: f64) -> f64 {
        (self.f)(Node {
            x: b - dr,
            from_left: (b - a) - dr,
            from_right: dr,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Accumulates a value and the integral of its absolute value.
#[derive(Default, Clone, Copy)]
struct Acc {
    v: f64,
    abs: f64,
}

impl Acc {
    fn push(&mut self, x: f64) {
        self.v += x;
        self.abs += x.abs();
    }
}

/// GL16 over `[lo, hi]`, given as offsets from the integral's left end.
fn gl_offsets<F: Fn(f64) -> f64>(lo: f64, hi: f64, g: F, acc: &mut Acc) {
    let (x, w) = gl16();
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        s += wi * g(c + h * xi);
    }
    acc.push(s * h);
}

/// Geometric mesh on offsets `[0, len]` graded toward 0, with the innermost
/// cell `[0, δ]` replaced by the pure power-law tail `g(δ/2) δ 2^β / (1+β)`.
fn graded_side<G: Fn(f64) -> f64>(len: f64, beta: f64, cells: usize, r: f64, g: G, acc: &mut Acc) {
    let mut hi = len;
    for _ in 0..cells {
        let lo = hi * r;
        gl_offsets(lo, hi, &g, acc);
        hi = lo;
    }
    let delta = hi;
    acc.push(g(0.5 * delta) * delta * 2f64.powf(beta) / (1.0 + beta));
}

fn uniform<G: Fn(f64) -> f64>(len: f64, cells: usize, g: G, acc: &mut Acc) {
    let h = len / cells as f64;
    for j in 0..cells {
        gl_offsets(j as f64 * h, (j + 1) as f64 * h, &g, acc);
    }
}

fn rule<F: Fn(Node) -> f64>(
    f: &Integrand<F>,
    a: f64,
    b: f64,
    scheme: QuadratureScheme,
    cells: usize,
    r: f64,
) -> Acc {
    let mut acc = Acc::default();
    let len = b - a;
    let from_left = |dl: f64| f.eval(a, b, dl);
    let from_right = |dr: f64| f.eval_right(a, b, dr);
    match (scheme, f.left, f.right) {
        (QuadratureScheme::PlainComposite, _, _) | (_, None, None) => {
            uniform(len, cells, from_left, &mut acc)
        }
        (_, Some(bl), None) => graded_side(len, bl, cells, r, from_left, &mut acc),
        (_, None, Some(br)) => graded_side(len, br, cells, r, from_right, &mut acc),
        (_, Some(bl), Some(br)) => {
            let half = 0.5 * len;
            graded_side(half, bl, cells, r, from_left, &mut acc);
            graded_side(len - half, br, cells, r, from_right, &mut acc);
        }
    }
    acc
}

/// One application of the composite rule without refinement; used inside
/// nested integrals where the outer refinement controls the error.
pub fn fixed_graded<F: Fn(Node) -> f64>(
    f: &Integrand<F>,
    a: f64,
    b: f64,
    cells: usize,
    ratio: f64,
) -> Result<f64> {
    f.check()?;
    if b <= a {
        return Ok(0.0);
    }
    Ok(rule(f, a, b, QuadratureScheme::GradedGeometric, cells, ratio).v)
}

/// Integral of `f` over `[a, b]`. The mesh is refined (cells doubled, the
/// grading ratio square-rooted so the innermost cell is unchanged) until two
/// successive values agree to the requested relative tolerance.
pub fn singular_integral<F: Fn(Node) -> f64>(
    f: &Integrand<F>,
    interval: (f64, f64),
    spec: &QuadratureSpec,
) -> Result<Quadrature> {
    spec.validate()?;
    f.check()?;
    let (a, b) = interval;
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Invalid(format!("invalid interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
        });
    }
    let mut cells = spec.cells;
    let mut r = spec.ratio;
    let mut q1 = rule(f, a, b, spec.scheme, cells, r);
    loop {
        if 2 * cells > QuadratureSpec::CELL_CAP {
            let est = (q1.v - rule(f, a, b, spec.scheme, cells / 2, r * r).v).abs();
            return Err(Error::QuadratureNotConverged {
                tolerance: spec.tolerance,
                estimate: est / q1.v.abs().max(f64::MIN_POSITIVE),
            });
        }
        cells *= 2;
        r = r.sqrt();
        let q2 = rule(f, a, b, spec.scheme, cells, r);
        if !q2.v.is_finite() {
            return Err(Error::Invalid("integrand produced a non-finite value".into()));
        }
        let diff = (q2.v - q1.v).abs();
        if diff <= spec.tolerance * q2.v.abs() || diff <= 1e-14 * q2.abs {
            return Ok(Quadrature {
                value: q2.v,
                error: diff + 1e-14 * q2.abs,
            });
        }
        q1 = q2;
    }
}

/// Both sides of
/// `∫_0^{u∧v} x^{-2α} (u-x)^{α-1} (v-x)^{α-1} dx = B(α, 1-2α) (uv)^{-α} |u-v|^{2α-1}`.
pub fn beta_substitution_identity(u: f64, v: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::param("alpha", alpha, "(0, 1/2)"));
    }
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::param("u", u, "(0, inf)"));
    }
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::param("v", v, "(0, inf)"));
    }
    if u == v {
        return Err(Error::Invalid(
            "u = v: the right side of the substitution identity is singular".into(),
        ));
    }
    let (lo, hi) = if u < v { (u, v) } else { (v, u) };
    let gap = hi - lo;
    let f = Integrand::new(|n: Node| {
        n.x.powf(-2.0 * alpha) * n.from_right.powf(alpha - 1.0) * (gap + n.from_right).powf(alpha - 1.0)
    })
    .singular_left(-2.0 * alpha)
    .singular_right(alpha - 1.0);
    let lhs = singular_integral(&f, (0.0, lo), &QuadratureSpec::default())?.value;
    let rhs = beta_fn(alpha, 1.0 - 2.0 * alpha)? * (u * v).powf(-alpha) * gap.powf(2.0 * alpha - 1.0);
    Ok((lhs, rhs))
}
