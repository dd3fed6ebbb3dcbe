//! Provenance headers, artifact files and the JSON summary.

use std::path::Path;

use serde::Serialize;

use crate::config::Loaded;
use crate::CliError;

/// `#`-prefixed lines carrying the command, config hash, master seed, the
/// config document verbatim and any flag overrides.
pub fn provenance_header(l: &Loaded) -> String {
    let mut s = format!(
        "# hermite {}\n# config_hash: {}\n# seed: {}\n",
        l.config.command.name(),
        l.hash,
        l.config.seed
    );
    for line in l.raw.lines() {
        s.push_str("# config: ");
        s.push_str(line);
        s.push('\n');
    }
    for o in &l.applied {
        s.push_str("# override: ");
        s.push_str(o);
        s.push('\n');
    }
    s
}

/// One output file: name relative to the output directory and body.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub body: String,
}

impl Artifact {
    pub fn csv(l: &Loaded, name: &str, body: String) -> Self {
        Self {
            name: name.to_string(),
            body: format!("{}{body}", provenance_header(l)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary<'a> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub pass_fail: &'a str,
    pub wall_time: f64,
}

pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.body).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

pub fn write_summary(dir: &Path, summary: &Summary) -> Result<(), CliError> {
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    std::fs::write(&path, json + "\n").map_err(|e| io(&path, e))
}

fn io(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}
