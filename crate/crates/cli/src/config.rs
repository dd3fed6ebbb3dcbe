//! Experiment configuration: a TOML document, optionally overridden by flags.

use std::path::{Path, PathBuf};

use hermite_core::chaos::Scheme;
use hermite_core::grid::DyadicGrid;
use hermite_core::hermite_kernel::HermiteParams;
use hermite_core::malliavin::{ElementaryProcess, IntegrandDocument};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Variation,
    Skorokhod,
    ConvergeZ,
    ConvergeIntegral,
    EstimateC,
    CheckIdentities,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Variation => "variation",
            Command::Skorokhod => "skorokhod",
            Command::ConvergeZ => "converge-z",
            Command::ConvergeIntegral => "converge-integral",
            Command::EstimateC => "estimate-c",
            Command::CheckIdentities => "check-identities",
        }
    }
}

fn default_h() -> f64 {
    0.75
}
fn default_k() -> usize {
    1
}
fn default_horizon() -> f64 {
    1.0
}
fn default_n_max() -> u32 {
    8
}
fn default_replicates() -> usize {
    1000
}
fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(rename = "H", default = "default_h")]
    pub h: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    /// Finest grid level: `N = 2^n_max` cells.
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    /// Levels at which variations are reported; `1..=n_max` when absent.
    #[serde(default)]
    pub levels: Option<Vec<u32>>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; never changes a reported number.
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub scheme: Scheme,
    /// Variation power for `variation`; `1/H` when absent.
    #[serde(default)]
    pub p: Option<f64>,
    /// Integration window for `skorokhod`; `[0, T]` when absent.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub integrand: Option<IntegrandDocument>,
    /// Path of a JSON or TOML integrand document, relative to the config file.
    #[serde(default)]
    pub integrand_file: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Flag overrides applied on top of the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// `key=value` pairs for top-level scalars, value in TOML syntax.
    pub set: Vec<String>,
}

/// A validated configuration with everything needed for provenance headers.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ExperimentConfig,
    /// The document exactly as read.
    pub raw: String,
    /// Overrides in the order applied, as `key = value`.
    pub applied: Vec<String>,
    pub hash: String,
}

impl Loaded {
    pub fn params(&self) -> HermiteParams {
        HermiteParams::new(self.config.h, self.config.k).expect("validated")
    }

    pub fn grid(&self) -> DyadicGrid {
        DyadicGrid::new(self.config.horizon, self.config.n_max).expect("validated")
    }

    pub fn levels(&self) -> Vec<u32> {
        self.config
            .levels
            .clone()
            .unwrap_or_else(|| (1..=self.config.n_max).collect())
    }

    pub fn threads(&self) -> usize {
        self.config.threads
    }

    pub fn out_dir(&self) -> PathBuf {
        self.config
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

pub fn load_file(path: &Path, overrides: &Overrides) -> Result<Loaded, CliError> {
    let raw = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    load_str(&raw, path.parent(), overrides)
}

/// Parses, applies overrides, resolves the integrand and validates.
/// `base` resolves a relative `integrand_file`.
pub fn load_str(raw: &str, base: Option<&Path>, overrides: &Overrides) -> Result<Loaded, CliError> {
    let mut table: toml::Table = raw
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let mut applied = Vec::new();
    for kv in &overrides.set {
        let (key, value) = kv.split_once('=').ok_or_else(|| {
            CliError::Config(format!("override `{kv}` is not of the form key=value"))
        })?;
        let key = key.trim();
        let value = parse_scalar(value.trim());
        applied.push(format!("{key} = {value}"));
        table.insert(key.to_string(), value);
    }
    let mut config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    if let Some(seed) = overrides.seed {
        applied.push(format!("seed = {seed}"));
        config.seed = seed;
    }
    if let Some(t) = overrides.threads {
        config.threads = t;
    }
    if let Some(out) = &overrides.out {
        config.out = Some(out.clone());
    }
    if let Some(file) = config.integrand_file.take() {
        if config.integrand.is_some() {
            return Err(field(
                "integrand_file",
                "give either `integrand` or `integrand_file`, not both",
            ));
        }
        let path = match base {
            Some(b) if file.is_relative() => b.join(&file),
            _ => file,
        };
        config.integrand = Some(read_integrand(&path)?);
    }
    validate(&config)?;
    let hash = config_hash(&config);
    Ok(Loaded {
        config,
        raw: raw.to_string(),
        applied,
        hash,
    })
}

/// TOML scalar if it parses as one, otherwise a bare string.
fn parse_scalar(s: &str) -> toml::Value {
    format!("v = {s}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(s.to_string()))
}

fn read_integrand(path: &Path) -> Result<IntegrandDocument, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let parsed = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| field("integrand_file", &format!("{}: {e}", path.display())))
}

fn field(name: &str, message: &str) -> CliError {
    CliError::Field {
        field: name.to_string(),
        message: message.to_string(),
    }
}

/// Every range check, before any computation.
pub fn validate(c: &ExperimentConfig) -> Result<(), CliError> {
    HermiteParams::new(c.h, c.k)?;
    if !(1..=3).contains(&c.k) {
        return Err(field("k", "must be 1, 2 or 3"));
    }
    let grid = DyadicGrid::new(c.horizon, c.n_max)?;
    if let Some(levels) = &c.levels {
        if levels.is_empty() {
            return Err(field("levels", "must not be empty"));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(field("levels", "must be strictly increasing"));
        }
        if levels.iter().any(|&n| n < 1 || n > c.n_max) {
            return Err(field(
                "levels",
                &format!("every level must lie in [1, n_max = {}]", c.n_max),
            ));
        }
    }
    if c.replicates == 0 {
        return Err(field("replicates", "must be at least 1"));
    }
    if c.threads == 0 {
        return Err(field("threads", "must be at least 1"));
    }
    if let Some(p) = c.p {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(field("p", "must lie in [1, inf)"));
        }
    }
    if let Some([t0, t1]) = c.window {
        if !(0.0 <= t0 && t0 < t1 && t1 <= c.horizon) {
            return Err(field(
                "window",
                &format!("must satisfy 0 <= t0 < t1 <= T = {}", c.horizon),
            ));
        }
        if grid.node_index(t0).is_none() || grid.node_index(t1).is_none() {
            return Err(field("window", "endpoints must be grid nodes"));
        }
    }
    if let Some(doc) = &c.integrand {
        let g = doc
            .to_process()
            .map_err(|e| field("integrand", &e.to_string()))?;
        check_integrand(&g, &grid)?;
    }
    match c.command {
        Command::Skorokhod | Command::ConvergeIntegral if c.integrand.is_none() => {
            return Err(field(
                "integrand",
                &format!("required by `{}`", c.command.name()),
            ));
        }
        Command::EstimateC if c.horizon < 1.0 => {
            return Err(field("T", "must be at least 1 so that Z_1 is on the grid"));
        }
        _ => {}
    }
    Ok(())
}

fn check_integrand(g: &ElementaryProcess, grid: &DyadicGrid) -> Result<(), CliError> {
    if !g.partition().spans(grid) {
        return Err(field(
            "integrand",
            &format!("partition must run from 0 to T = {}", grid.horizon()),
        ));
    }
    if !g.partition().is_aligned(grid) {
        return Err(field("integrand", "partition points must be grid nodes"));
    }
    Ok(())
}

/// SHA-256 of the resolved configuration, ignoring thread count and output
/// directory since neither changes any result.
pub fn config_hash(c: &ExperimentConfig) -> String {
    let mut canon = c.clone();
    canon.threads = 1;
    canon.out = None;
    canon.levels = Some(canon.levels.unwrap_or_else(|| (1..=c.n_max).collect()));
    let json = serde_json::to_string(&canon).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let o = Overrides {
            seed: Some(9),
            set: vec!["H=0.8".into(), "k = 2".into()],
            ..Default::default()
        };
        let l = load_str("command = \"converge-z\"\n", None, &o).unwrap();
        assert_eq!(l.config.h, 0.8);
        assert_eq!(l.config.k, 2);
        assert_eq!(l.config.seed, 9);
        assert_eq!(l.levels(), (1..=8).collect::<Vec<_>>());
        assert_eq!(l.applied, vec!["H = 0.8", "k = 2", "seed = 9"]);
    }

    #[test]
    fn hash_ignores_threads_and_out() {
        let a = load_str(
            "command = \"simulate\"\nthreads = 4\nout = \"x\"\n",
            None,
            &Overrides::default(),
        )
        .unwrap();
        let b = load_str("command = \"simulate\"\n", None, &Overrides::default()).unwrap();
        let c = load_str(
            "command = \"simulate\"\nseed = 1\n",
            None,
            &Overrides::default(),
        )
        .unwrap();
        assert_eq!(a.hash, b.hash);
        assert_ne!(a.hash, c.hash);
        assert_eq!(a.hash.len(), 64);
    }

    #[test]
    fn rejects_bad_input() {
        let err = |s: &str| {
            load_str(s, None, &Overrides::default())
                .unwrap_err()
                .to_string()
        };
        let h = err("command = \"simulate\"\nH = 0.4\n");
        assert!(h.contains("`H`") && h.contains("(1/2, 1)"), "{h}");
        assert!(err("command = \"simulate\"\nbogus = 1\n").contains("bogus"));
        assert!(err("command = \"fly\"\n").contains("fly"));
        assert!(err("command = \"simulate\"\nlevels = [3, 2]\n").contains("levels"));
        assert!(err("command = \"skorokhod\"\n").contains("integrand"));
        let unaligned = "command = \"skorokhod\"\nn_max = 2\n[integrand]\npartition = [0.0, 0.3, 1.0]\nsegments = [{kind = \"const\", value = 1.0}, {kind = \"const\", value = 2.0}]\n";
        assert!(err(unaligned).contains("grid nodes"));
    }

    #[test]
    fn inline_integrand() {
        let doc = r#"
command = "converge-integral"
[integrand]
partition = [0.0, 0.5, 1.0]
segments = [
  { kind = "const", value = 1.0 },
  { kind = "ridge", profile = "sin", weights = [1.0], directions = [{ type = "cos", omega = 1.0 }] },
]
"#;
        let l = load_str(doc, None, &Overrides::default()).unwrap();
        assert_eq!(l.config.integrand.unwrap().segments.len(), 2);
    }
}
