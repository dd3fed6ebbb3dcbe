use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hermite_cli::output::{write_artifacts, write_summary, Summary};
use hermite_cli::{execute, load_file, load_str, Overrides, EXIT_FAIL, EXIT_INVALID, EXIT_PASS};

/// Simulate Hermite processes, their Skorokhod integrals and 1/H-variations.
#[derive(Debug, Parser)]
#[command(name = "hermite", version)]
struct Args {
    /// TOML experiment document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the document.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a top-level scalar, e.g. `--set H=0.7`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        seed: args.seed,
        threads: args.threads,
        out: args.out,
        set: args.set,
    };
    let loaded = match &args.config {
        Some(path) => load_file(path, &overrides),
        None => load_str("", None, &overrides),
    };
    let loaded = match loaded {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    let outcome = match execute(&loaded) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID as u8);
        }
    };
    let dir = loaded.out_dir();
    let summary = Summary {
        command: loaded.config.command.name(),
        config_hash: &loaded.hash,
        pass_fail: if outcome.passed { "pass" } else { "fail" },
        wall_time: outcome.wall_time,
    };
    if let Err(e) =
        write_artifacts(&dir, &outcome.artifacts).and_then(|_| write_summary(&dir, &summary))
    {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_INVALID as u8);
    }
    for n in &outcome.notes {
        println!("{n}");
    }
    println!(
        "{}: {} ({:.2} s), outputs in {}",
        summary.command,
        summary.pass_fail,
        outcome.wall_time,
        dir.display()
    );
    ExitCode::from(if outcome.passed { EXIT_PASS } else { EXIT_FAIL } as u8)
}
