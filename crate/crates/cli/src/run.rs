//! Command dispatch.

use std::fmt::Write as _;
use std::time::Instant;

use hermite_core::chaos::{CellRules, PathSample};
use hermite_core::malliavin::{ElementaryProcess, SkorokhodIntegrator};
use hermite_core::randomness::{sample_noise, SeedSpec};
use hermite_core::stats::{par_replicates, Summary};
use hermite_core::variation::{
    closed_form_c, converge_integral, converge_z, estimate_c, fmt_f64, inequality_suite,
    variation_report, VariationReport,
};

use crate::config::{Command, Loaded};
use crate::identities::{identity_suite, to_csv};
use crate::output::Artifact;
use crate::CliError;

/// Relative tolerance of the deterministic-integrand consistency check.
pub const DETERMINISTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// False iff a hard assertion failed.
    pub passed: bool,
    /// Short human-readable notes for the terminal.
    pub notes: Vec<String>,
    pub wall_time: f64,
}

/// Runs the configured command on a pool of `threads` workers.
pub fn execute(l: &Loaded) -> Result<Outcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(l.threads())
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let mut out = pool.install(|| run(l))?;
    out.wall_time = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Runs the configured command on the current rayon pool.
pub fn run(l: &Loaded) -> Result<Outcome, CliError> {
    let c = &l.config;
    if c.command == Command::CheckIdentities {
        let rows = identity_suite(&l.params(), c.horizon, c.seed)?;
        let failed = rows.iter().filter(|r| !r.passed()).count();
        let worst = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
        return Ok(Outcome {
            artifacts: vec![Artifact::csv(l, "check-identities.csv", to_csv(&rows))],
            passed: failed == 0,
            notes: vec![format!(
                "{} identities checked, {failed} failed, largest relative gap {worst:.3e}",
                rows.len()
            )],
            wall_time: 0.0,
        });
    }
    let rules = CellRules::with_scheme(l.params(), l.grid(), c.scheme)?;
    let integrand = c.integrand.as_ref().map(|d| d.to_process()).transpose()?;
    match c.command {
        Command::Simulate => simulate(l, &rules),
        Command::Variation => {
            let p = c.p.unwrap_or(1.0 / c.h);
            let levels = l.levels();
            let report = variation_report(&rules, &levels, p, c.replicates, c.seed)?;
            let g = match integrand {
                Some(g) => g,
                None => ElementaryProcess::one(c.horizon)?,
            };
            let h = ElementaryProcess::deterministic(
                g.partition().clone(),
                &vec![0.5; g.partition().segments()],
            )?;
            let suite = inequality_suite(&rules, &g, &h, &levels, c.replicates, c.seed)?;
            let hard_failures = suite
                .entries
                .iter()
                .filter(|e| e.name.starts_with("triangle") && e.passed == Some(false))
                .count();
            let soft_failures = suite
                .entries
                .iter()
                .filter(|e| !e.name.starts_with("triangle") && e.passed == Some(false))
                .count();
            let mut notes = report_notes(&report);
            notes.push(format!(
                "pathwise triangle checks failing: {hard_failures}; Monte Carlo distance checks outside one stderr: {soft_failures}"
            ));
            Ok(Outcome {
                artifacts: vec![
                    Artifact::csv(l, "variation.csv", report.to_csv()),
                    Artifact::csv(l, "inequalities.csv", suite.to_csv()),
                ],
                passed: hard_failures == 0,
                notes,
                wall_time: 0.0,
            })
        }
        Command::Skorokhod => skorokhod(l, &rules, &integrand.expect("validated")),
        Command::ConvergeZ => {
            let report = converge_z(&rules, &l.levels(), c.replicates, c.seed)?;
            Ok(report_outcome(l, "converge-z.csv", report))
        }
        Command::ConvergeIntegral => {
            let g = integrand.expect("validated");
            let report = converge_integral(&rules, &g, &l.levels(), c.replicates, c.seed)?;
            Ok(report_outcome(l, "converge-integral.csv", report))
        }
        Command::EstimateC => {
            let est = estimate_c(&rules, c.replicates, c.seed)?;
            let exact = closed_form_c(rules.params()).unwrap_or(f64::NAN);
            let body = format!(
                "H,k,T,n_max,C,stderr,replicates,closed_form\n{},{},{},{},{},{},{},{}\n",
                fmt_f64(c.h),
                c.k,
                fmt_f64(c.horizon),
                c.n_max,
                fmt_f64(est.value),
                fmt_f64(est.stderr.unwrap_or(f64::NAN)),
                est.replicates,
                fmt_f64(exact)
            );
            Ok(Outcome {
                artifacts: vec![Artifact::csv(l, "estimate-c.csv", body)],
                passed: true,
                notes: vec![format!(
                    "C = {:.6} ± {:.6}",
                    est.value,
                    est.stderr.unwrap_or(f64::NAN)
                )],
                wall_time: 0.0,
            })
        }
        Command::CheckIdentities => unreachable!(),
    }
}

fn simulate(l: &Loaded, rules: &CellRules) -> Result<Outcome, CliError> {
    let grid = *rules.grid();
    let w = sample_noise(SeedSpec::new(l.config.seed, 0), &grid);
    let z = PathSample::from_increments(grid, &rules.increments(w.increments()))?;
    Ok(Outcome {
        artifacts: vec![Artifact::csv(l, "simulate.csv", z.to_csv())],
        passed: true,
        notes: vec![format!(
            "{} nodes, Z_T = {:.6}",
            grid.node_count(),
            z.values()[grid.cells()]
        )],
        wall_time: 0.0,
    })
}

fn report_notes(r: &VariationReport) -> Vec<String> {
    let trend: Vec<String> = r
        .rows
        .iter()
        .map(|row| format!("{}:{:.4}", row.n, row.abs_err))
        .collect();
    vec![format!("abs_err by level {}", trend.join(" "))]
}

fn report_outcome(l: &Loaded, name: &str, r: VariationReport) -> Outcome {
    let mut notes = report_notes(&r);
    notes.push(format!(
        "pathwise triangle checks: {} made, {} failed",
        r.triangle_checks, r.triangle_violations
    ));
    Outcome {
        artifacts: vec![Artifact::csv(l, name, r.to_csv())],
        passed: r.triangle_violations == 0,
        notes,
        wall_time: 0.0,
    }
}

/// Per-replicate integrals over the window; for deterministic integrands each
/// is also compared with `Σ_c G_c ΔZ_c` on the same noise.
fn skorokhod(l: &Loaded, rules: &CellRules, g: &ElementaryProcess) -> Result<Outcome, CliError> {
    let c = &l.config;
    let grid = *rules.grid();
    let window = c.window.map(|[a, b]| (a, b)).unwrap_or((0.0, c.horizon));
    let integ = SkorokhodIntegrator::new(rules, g)?;
    let per_cell: Option<Vec<f64>> = g.deterministic_values().map(|vals| {
        let idx = g.partition().node_indices(&grid).expect("validated");
        let mut out = vec![0.0; grid.cells()];
        for (seg, v) in idx.windows(2).zip(vals) {
            out[seg[0]..seg[1]].iter_mut().for_each(|x| *x = v);
        }
        out
    });
    let (i0, i1) = (
        grid.node_index(window.0).expect("validated"),
        grid.node_index(window.1).expect("validated"),
    );
    let rows = par_replicates(c.replicates, |r| -> hermite_core::Result<(f64, f64)> {
        let w = sample_noise(SeedSpec::new(c.seed, r), &grid);
        let value = integ.integral(&w, window)?;
        let gap = match &per_cell {
            Some(gc) => {
                let dz = rules.increments(w.increments());
                let terms: Vec<f64> = (i0..i1).map(|j| gc[j] * dz[j]).collect();
                let scale = terms
                    .iter()
                    .map(|t| t.abs())
                    .sum::<f64>()
                    .max(f64::MIN_POSITIVE);
                (value - terms.iter().sum::<f64>()).abs() / scale
            }
            None => f64::NAN,
        };
        Ok((value, gap))
    })
    .into_iter()
    .collect::<hermite_core::Result<Vec<_>>>()?;
    let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let max_gap = rows.iter().map(|r| r.1).fold(f64::NAN, f64::max);
    let passed = per_cell.is_none() || max_gap <= DETERMINISTIC_TOL;
    let s = Summary::of(&values);
    let mut body = String::from("replicate,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(body, "{i},{}", fmt_f64(*v));
    }
    let summary = format!(
        "window_start,window_end,mean,stderr,replicates,deterministic_max_rel_gap\n{},{},{},{},{},{}\n",
        fmt_f64(window.0),
        fmt_f64(window.1),
        fmt_f64(s.mean),
        fmt_f64(s.stderr.unwrap_or(f64::NAN)),
        c.replicates,
        fmt_f64(max_gap)
    );
    let mut notes = vec![format!(
        "mean {:.6} ± {:.6} over {} replicates",
        s.mean,
        s.stderr.unwrap_or(f64::NAN),
        c.replicates
    )];
    if per_cell.is_some() {
        notes.push(format!(
            "deterministic consistency: largest relative gap {max_gap:.3e}"
        ));
    }
    Ok(Outcome {
        artifacts: vec![
            Artifact::csv(l, "skorokhod.csv", body),
            Artifact::csv(l, "skorokhod-summary.csv", summary),
        ],
        passed,
        notes,
        wall_time: 0.0,
    })
}
