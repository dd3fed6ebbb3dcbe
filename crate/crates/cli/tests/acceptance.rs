//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use hermite_cli::identities::identity_suite;
use hermite_core::chaos::{CellRules, FbmCholesky, HermiteSimulator, KernelTensor};
use hermite_core::grid::{DyadicGrid, Partition};
use hermite_core::hermite_kernel::{fbm_covariance, kernel_covariance, HermiteParams};
use hermite_core::malliavin::{
    affine_product_oracle, duality_check, windowed_norm_scaling, AffineVariable,
    CylindricalVariable, Direction, ElementaryProcess, Profile, SkorokhodIntegrator,
};
use hermite_core::randomness::{sample_noise, SeedSpec};
use hermite_core::stats::{par_replicates, Summary};
use hermite_core::variation::{
    closed_form_integral_target, converge_integral, converge_z, inequality_suite,
};

type Check = (bool, String);

fn rules(h: f64, k: usize, level: u32) -> CellRules {
    CellRules::new(
        HermiteParams::new(h, k).unwrap(),
        DyadicGrid::new(1.0, level).unwrap(),
    )
    .unwrap()
}

fn two_step() -> ElementaryProcess {
    ElementaryProcess::deterministic(Partition::new(vec![0.0, 0.5, 1.0]).unwrap(), &[2.0, 0.5])
        .unwrap()
}

/// Constant 1 on `[0, 1/2)`, `sin(I(cos))` on `[1/2, 1]`.
fn sin_ridge() -> ElementaryProcess {
    ElementaryProcess::new(
        Partition::new(vec![0.0, 0.5, 1.0]).unwrap(),
        vec![
            CylindricalVariable::constant(1.0).unwrap().into(),
            CylindricalVariable::ridge(
                Profile::Sin,
                vec![1.0],
                vec![Direction::Cos { omega: 1.0 }],
            )
            .unwrap()
            .into(),
        ],
    )
    .unwrap()
}

fn identities() -> Check {
    let mut worst = 0.0f64;
    let mut failed = 0;
    for (h, k) in [(0.75, 1), (0.7, 2), (0.8, 3)] {
        let rows = identity_suite(&HermiteParams::new(h, k).unwrap(), 1.0, 1).unwrap();
        failed += rows.iter().filter(|r| !r.passed()).count();
        worst = rows.iter().map(|r| r.gap).fold(worst, f64::max);
    }
    (
        failed == 0,
        format!("{failed} failures, largest relative gap {worst:.2e}"),
    )
}

fn covariance_reproduction() -> Check {
    let lattice = [0.25, 0.5, 0.75, 1.0];
    let mut ok = true;
    let mut notes = Vec::new();
    for (h, k) in [(0.75, 1), (0.7, 2)] {
        let p = HermiteParams::new(h, k).unwrap();
        let mut worst = 0.0f64;
        for &s in &lattice {
            for &t in &lattice {
                let exact = fbm_covariance(h, s, t);
                worst = worst.max((kernel_covariance(&p, s, t).unwrap() - exact).abs() / exact);
            }
        }
        let sim = HermiteSimulator::new(p, DyadicGrid::new(1.0, 8).unwrap()).unwrap();
        let sq = par_replicates(2000, |r| {
            let z = sim
                .simulate(&sample_noise(SeedSpec::new(202, r), sim.grid()))
                .unwrap();
            z.at(sim.grid().cells()).powi(2)
        });
        let var = Summary::of(&sq);
        let se = var.stderr.unwrap();
        let var_ok = (var.mean - 1.0).abs() <= 3.0 * se;
        ok &= worst <= 5e-3 && var_ok;
        notes.push(format!(
            "(H={h},k={k}) lattice gap {worst:.1e}, Var(Z_1) = {:.4} ± {se:.4}",
            var.mean
        ));
    }
    (ok, notes.join("; "))
}

fn fbm_oracle() -> Check {
    let lattice = [0.25, 0.5, 0.75, 1.0];
    let reps = 2000;
    let mut ok = true;
    let mut notes = Vec::new();
    for h in [0.6, 0.75] {
        let grid = DyadicGrid::new(1.0, 8).unwrap();
        let sim = HermiteSimulator::new(HermiteParams::new(h, 1).unwrap(), grid).unwrap();
        let chol = FbmCholesky::new(h, grid).unwrap();
        let idx: Vec<usize> = lattice
            .iter()
            .map(|&t| grid.node_index(t).unwrap())
            .collect();
        let at = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let a = par_replicates(reps, |r| {
            at(sim
                .simulate(&sample_noise(SeedSpec::new(303, r), &grid))
                .unwrap()
                .values())
        });
        let b = par_replicates(reps, |r| at(chol.sample(SeedSpec::new(304, r)).values()));
        let mut worst_z = 0.0f64;
        for i in 0..lattice.len() {
            for j in i..lattice.len() {
                let pa = Summary::of(&a.iter().map(|x| x[i] * x[j]).collect::<Vec<_>>());
                let pb = Summary::of(&b.iter().map(|x| x[i] * x[j]).collect::<Vec<_>>());
                let se = pa.stderr.unwrap().hypot(pb.stderr.unwrap());
                worst_z = worst_z.max((pa.mean - pb.mean).abs() / se);
            }
        }
        ok &= worst_z <= 3.0;
        notes.push(format!("H={h}: largest |z| {worst_z:.2}"));
    }
    (ok, notes.join("; "))
}

fn duality_and_pull_out() -> Check {
    let mut ok = true;
    let mut worst_z = 0.0f64;
    for k in [1, 2] {
        let r = rules(0.7, k, 4);
        let f = KernelTensor::hermite_kernel(&r, 1.0).unwrap();
        let mut vars: Vec<CylindricalVariable> =
            [Profile::Sin, Profile::Cos, Profile::Tanh, Profile::Gauss]
                .into_iter()
                .map(|p| {
                    CylindricalVariable::ridge(p, vec![1.2], vec![Direction::Cos { omega: 1.0 }])
                        .unwrap()
                })
                .collect();
        vars.push(CylindricalVariable::constant(2.0).unwrap());
        for (i, v) in vars.iter().enumerate() {
            let d =
                duality_check(v, &f, r.scheme(), 10_000, 400 + 10 * k as u64 + i as u64).unwrap();
            ok &= d.holds(3.0);
            if let Some(se) = d.diff.stderr.filter(|s| *s > 0.0) {
                worst_z = worst_z.max(d.diff.mean.abs() / se);
            }
        }
    }

    let f = AffineVariable {
        intercept: 0.4,
        direction: Direction::Poly {
            coeffs: vec![1.0, -2.0, 0.5],
        },
    };
    let r1 = rules(0.75, 1, 8);
    let g = ElementaryProcess::new(
        Partition::new(vec![0.0, 0.25, 0.75, 1.0]).unwrap(),
        vec![
            CylindricalVariable::constant(0.0).unwrap().into(),
            f.clone().into(),
            CylindricalVariable::constant(0.0).unwrap().into(),
        ],
    )
    .unwrap();
    let integ = SkorokhodIntegrator::new(&r1, &g).unwrap();
    let mut pull_gap = 0.0f64;
    for rep in 0..50 {
        let w = sample_noise(SeedSpec::new(405, rep), r1.grid());
        let a = integ.integral(&w, (0.0, 1.0)).unwrap();
        let b = affine_product_oracle(&r1, &f, (0.25, 0.75), &w).unwrap();
        pull_gap = pull_gap.max((a - b).abs() / b.abs());
    }

    let mut det_gap = 0.0f64;
    for (h, k, level) in [(0.75, 1, 8), (0.7, 2, 7)] {
        let r = rules(h, k, level);
        let sim = HermiteSimulator::new(*r.params(), *r.grid()).unwrap();
        let pts = vec![0.0, 0.375, 0.5, 1.0];
        let vals = [2.0, -0.5, 1.25];
        let g =
            ElementaryProcess::deterministic(Partition::new(pts.clone()).unwrap(), &vals).unwrap();
        let idx = Partition::new(pts).unwrap().node_indices(r.grid()).unwrap();
        let integ = SkorokhodIntegrator::new(&r, &g).unwrap();
        for rep in 0..20 {
            let w = sample_noise(SeedSpec::new(406, rep), r.grid());
            let z = sim.simulate(&w).unwrap();
            let direct: f64 = idx
                .windows(2)
                .zip(vals)
                .map(|(s, v)| v * (z.at(s[1]) - z.at(s[0])))
                .sum();
            let via = integ.integral(&w, (0.0, 1.0)).unwrap();
            det_gap = det_gap.max((via - direct).abs() / direct.abs());
        }
    }
    ok &= pull_gap <= 1e-9 && det_gap <= 1e-9;
    (
        ok,
        format!("duality largest |z| {worst_z:.2}; pull-out gap {pull_gap:.1e}; deterministic gap {det_gap:.1e}"),
    )
}

fn variation_of_z() -> Check {
    let r1 = rules(0.75, 1, 10);
    let rep1 = converge_z(&r1, &(4..=10).collect::<Vec<_>>(), 2000, 501).unwrap();
    let last = rep1.rows.last().unwrap();
    let allowance = 0.05 * last.target + 3.0 * last.stderr.unwrap();
    let ok1 = last.bias() <= allowance;

    let r2 = rules(0.7, 2, 8);
    let rep2 = converge_z(&r2, &(2..=7).collect::<Vec<_>>(), 500, 502).unwrap();
    let ok2 = rep2.l1_decreasing_tail(3, 0.0);
    let tail: Vec<String> = rep2.rows[rep2.rows.len() - 3..]
        .iter()
        .map(|r| format!("{:.4}", r.abs_err))
        .collect();
    (
        ok1 && ok2,
        format!(
            "k=1 bias {:.4} <= {allowance:.4}; k=2 E|V - C T| over finest levels {}",
            last.bias(),
            tail.join(" > ")
        ),
    )
}

fn integral_variation() -> Check {
    let r1 = rules(0.75, 1, 10);
    let g = two_step();
    let target = closed_form_integral_target(r1.params(), &g).unwrap();
    let rep1 = converge_integral(&r1, &g, &(4..=10).collect::<Vec<_>>(), 2000, 601).unwrap();
    let last = rep1.rows.last().unwrap();
    let allowance = 0.05 * target + 3.0 * last.stderr.unwrap();
    let bias = (last.mean_v - target).abs();
    let ok1 = bias <= allowance && (last.target - target).abs() <= 1e-12 * target;

    let r2 = rules(0.7, 2, 8);
    let rep2 =
        converge_integral(&r2, &sin_ridge(), &(2..=7).collect::<Vec<_>>(), 500, 602).unwrap();
    let ok2 = rep2.l1_decreasing_tail(3, 0.0);
    let tail: Vec<String> = rep2.rows[rep2.rows.len() - 3..]
        .iter()
        .map(|r| format!("{:.4}", r.abs_err))
        .collect();
    (
        ok1 && ok2,
        format!(
            "two-step bias {bias:.4} <= {allowance:.4} (target {target:.4}); sin-ridge E|V - target| {}",
            tail.join(" > ")
        ),
    )
}

fn inequalities() -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for (h, k, g) in [(0.75, 1, two_step()), (0.7, 2, sin_ridge())] {
        let r = rules(h, k, 8);
        let half = ElementaryProcess::deterministic(g.partition().clone(), &[0.5, 0.5]).unwrap();
        let suite = inequality_suite(&r, &g, &half, &[4, 6, 8], 500, 700 + k as u64).unwrap();
        let checked: Vec<_> = suite
            .entries
            .iter()
            .filter(|e| e.passed.is_some())
            .collect();
        let failed = checked.iter().filter(|e| e.passed == Some(false)).count();
        let fit = windowed_norm_scaling(&r, &[2, 3, 4, 5, 6], 2000, 710 + k as u64).unwrap();
        let in_band = fit.exponent >= h / 2.0 && fit.exponent <= 2.0 * h;
        ok &= failed == 0 && in_band;
        notes.push(format!(
            "(H={h},k={k}) {failed} of {} checks failed, scaling exponent {:.3}",
            checked.len(),
            fit.exponent
        ));
    }
    (ok, notes.join("; "))
}

fn run_binary(config: &Path, out: &Path, threads: usize) -> (i32, String) {
    let status = Command::new(env!("CARGO_BIN_EXE_hermite"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .output()
        .expect("binary runs");
    let csv = std::fs::read_to_string(out.join("converge-integral.csv")).unwrap_or_default();
    (status.status.code().unwrap_or(-1), csv)
}

fn reproducibility() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        r#"command = "converge-integral"
H = 0.7
k = 2
n_max = 6
levels = [2, 4, 6]
replicates = 64
seed = 88

[integrand]
partition = [0.0, 0.5, 1.0]
segments = [
  { kind = "const", value = 1.0 },
  { kind = "ridge", profile = "sin", weights = [1.0], directions = [{ type = "cos", omega = 1.0 }] },
]
"#,
    )
    .unwrap();
    let runs: Vec<(i32, String)> = [(1, "a"), (1, "b"), (4, "c")]
        .into_iter()
        .map(|(t, name)| run_binary(&config, &dir.path().join(name), t))
        .collect();
    let ok = runs
        .iter()
        .all(|(code, csv)| *code == 0 && !csv.is_empty() && *csv == runs[0].1);
    (
        ok,
        format!(
            "3 runs (threads 1, 1, 4), {} bytes each, identical: {ok}",
            runs[0].1.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("closed-form identities", identities),
        ("covariance reproduction", covariance_reproduction),
        ("FBM oracle equivalence", fbm_oracle),
        ("duality and pull-out", duality_and_pull_out),
        ("variation of Z", variation_of_z),
        ("variation of the Skorokhod integral", integral_variation),
        ("inequality suite", inequalities),
        ("reproducibility", reproducibility),
    ];
    let mut all = true;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = f();
        all &= ok;
        println!(
            "criterion {}: {} {name} ({:.1} s): {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
