//! Config-file overlay and manifest output.
//!
//! The config file is a single JSON object with flat dotted keys, e.g.
//! `{"engine.window": 500, "gen.seed": 7}`. Unknown keys are rejected so a
//! typo cannot silently fall back to a default. Flags take precedence over
//! file entries; file entries take precedence over built-in defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::commands::CliError;

/// Every key any subcommand understands.
const KNOWN_KEYS: &[&str] = &[
    "data.tick_size",
    "gen.seed",
    "gen.n_ticks",
    "gen.symbol",
    "gen.securities",
    "gen.theta",
    "gen.sigma",
    "gen.sigma_m",
    "gen.x0",
    "gen.shift_at",
    "gen.shift_theta",
    "gen.shift_sigma",
    "pretrain.window",
    "pretrain.horizon",
    "pretrain.hidden",
    "pretrain.lr",
    "pretrain.epochs",
    "pretrain.batch_size",
    "pretrain.no_move_cap",
    "pretrain.seed",
    "engine.window",
    "engine.horizon",
    "engine.batch_size",
    "engine.threshold",
    "engine.lr_online",
    "engine.online_updates",
    "run.include_warmup",
    "run.jobs",
    "sweep.grid",
    "sweep.seed",
    "sweep.target_pct",
    "sweep.calibration_frac",
    "calibrate.target_pct",
    "bench.n_ticks",
    "bench.securities",
    "bench.seed",
    "bench.hidden",
];

#[derive(Debug, Default)]
pub struct FileConfig {
    map: BTreeMap<String, Value>,
}

impl FileConfig {
    /// Loads and validates the file; `None` yields an empty overlay.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let map: BTreeMap<String, Value> = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("config {}: unknown key {key:?}", path.display())));
            }
        }
        Ok(Self { map })
    }

    fn number(&self, key: &str) -> Result<Option<f64>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(v) => Err(CliError::Usage(format!("config key {key:?}: expected a number, got {v}"))),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.number(key)
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.number(key)? {
            None => Ok(None),
            Some(n) if n >= 0.0 && n.fract() == 0.0 => Ok(Some(n as usize)),
            Some(n) => Err(CliError::Usage(format!("config key {key:?}: expected a non-negative integer, got {n}"))),
        }
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, CliError> {
        Ok(self.usize(key)?.map(|n| n as u64))
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(v) => Err(CliError::Usage(format!("config key {key:?}: expected a bool, got {v}"))),
        }
    }

    pub fn string(&self, key: &str) -> Result<Option<String>, CliError> {
        match self.map.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(CliError::Usage(format!("config key {key:?}: expected a string, got {v}"))),
        }
    }
}

/// Flag beats file beats default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Parses "10,10"-style hidden layer lists.
pub fn parse_hidden(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("bad hidden layer list {s:?}")))
        })
        .collect()
}

/// Writes the reproducibility manifest: the subcommand plus its fully
/// resolved configuration. Content depends only on the resolved inputs, so
/// identical invocations write identical manifests.
pub fn write_manifest(path: &Path, command: &str, resolved: Value) -> Result<(), CliError> {
    let body = serde_json::json!({ "command": command, "config": resolved });
    let text = serde_json::to_string_pretty(&body).expect("manifest serialize");
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Manifest path for commands whose output is a single file: a sibling
/// named `<file>.manifest.json`.
pub fn sibling_manifest(out: &Path) -> std::path::PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}
