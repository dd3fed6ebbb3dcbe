//! Closed-form identity checks: `K(u, v)`, the Beta substitution and `c_{H,k}`.

use std::fmt::Write as _;

use hermite_core::hermite_kernel::{c_constant, k_closed_form, k_quadrature_form, HermiteParams};
use hermite_core::randomness::{SeedSpec, Stream};
use hermite_core::special_math::{
    beta_substitution_identity, factorial, singular_integral, Integrand, Node, QuadratureSpec,
};
use hermite_core::variation::fmt_f64;
use rand::Rng;

pub const K_PAIRS: usize = 50;
pub const BETA_DRAWS: usize = 100;
pub const K_TOL: f64 = 1e-6;
pub const BETA_TOL: f64 = 1e-6;
pub const C_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub identity: &'static str,
    pub case: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Relative gap.
    pub gap: f64,
    pub tolerance: f64,
}

impl IdentityRow {
    fn new(identity: &'static str, case: String, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let gap = (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE);
        Self {
            identity,
            case,
            lhs,
            rhs,
            gap,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.gap <= self.tolerance
    }
}

pub const IDENTITY_HEADER: &str = "identity,case,lhs,rhs,gap,tolerance,passed";

pub fn to_csv(rows: &[IdentityRow]) -> String {
    let mut s = format!("{IDENTITY_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.identity,
            r.case,
            fmt_f64(r.lhs),
            fmt_f64(r.rhs),
            fmt_f64(r.gap),
            fmt_f64(r.tolerance),
            r.passed()
        );
    }
    s
}

/// Draws a pair in `(0, T]` at least `T/1000` apart.
fn pair(rng: &mut impl Rng, horizon: f64) -> (f64, f64) {
    loop {
        let u = horizon * (1.0 - rng.random::<f64>());
        let v = horizon * (1.0 - rng.random::<f64>());
        if (u - v).abs() > 1e-3 * horizon {
            return (u, v);
        }
    }
}

/// `c_{H,k}` rebuilt from a Beta function obtained by quadrature of
/// `x^{a-1} (1-x)^{d-1}` rather than from Gamma functions.
pub fn c_by_quadrature(h: f64, k: usize) -> hermite_core::Result<f64> {
    let p = HermiteParams::new(h, k)?;
    let d = 2.0 * (1.0 - h) / k as f64;
    let f = Integrand::new(|n: Node| n.x.powf(p.a - 1.0) * n.from_right.powf(d - 1.0))
        .singular_left(p.a - 1.0)
        .singular_right(d - 1.0);
    let beta = singular_integral(
        &f,
        (0.0, 1.0),
        &QuadratureSpec::default().with_tolerance(1e-13),
    )?
    .value;
    Ok((h * (2.0 * h - 1.0) / (factorial(k) * beta.powi(k as i32))).sqrt())
}

/// The full suite for `(H, k)` on `(0, T]`; draws come from the auxiliary
/// stream of replicate 0 under `seed`.
pub fn identity_suite(
    params: &HermiteParams,
    horizon: f64,
    seed: u64,
) -> hermite_core::Result<Vec<IdentityRow>> {
    let mut rng = SeedSpec::new(seed, 0).rng(Stream::Aux);
    let mut rows = Vec::new();
    for i in 0..K_PAIRS {
        let (u, v) = pair(&mut rng, horizon);
        rows.push(IdentityRow::new(
            "K_uv",
            format!("{i}:u={}:v={}", fmt_f64(u), fmt_f64(v)),
            k_quadrature_form(params, u, v)?,
            k_closed_form(params, u, v)?,
            K_TOL,
        ));
    }
    for i in 0..BETA_DRAWS {
        let (u, v) = pair(&mut rng, horizon);
        let alpha = 0.05 + 0.4 * rng.random::<f64>();
        let (lhs, rhs) = beta_substitution_identity(u, v, alpha)?;
        rows.push(IdentityRow::new(
            "beta_substitution",
            format!(
                "{i}:u={}:v={}:alpha={}",
                fmt_f64(u),
                fmt_f64(v),
                fmt_f64(alpha)
            ),
            lhs,
            rhs,
            BETA_TOL,
        ));
    }
    let mut cases: Vec<(f64, usize)> = [0.55, 0.65, 0.75, 0.85, 0.95]
        .iter()
        .flat_map(|&h| (1..=3).map(move |k| (h, k)))
        .collect();
    cases.push((params.h, params.k));
    for (h, k) in cases {
        rows.push(IdentityRow::new(
            "c_constant",
            format!("H={}:k={k}", fmt_f64(h)),
            c_by_quadrature(h, k)?,
            c_constant(h, k)?,
            C_TOL,
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_for_a_second_order_case() {
        let p = HermiteParams::new(0.7, 2).unwrap();
        let rows = identity_suite(&p, 1.0, 3).unwrap();
        assert_eq!(rows.len(), K_PAIRS + BETA_DRAWS + 16);
        assert!(rows.iter().all(IdentityRow::passed));
        assert!(to_csv(&rows).lines().skip(1).all(|l| l.ends_with(",true")));
    }

    #[test]
    fn a_wrong_value_fails() {
        let r = IdentityRow::new("x", "0".into(), 1.0 + 1e-5, 1.0, 1e-6);
        assert!(!r.passed());
    }
}
