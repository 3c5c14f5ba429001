//! Run configuration: a TOML document whose top-level tables mirror
//! [`SimConfig`], plus an `output_dir` key.
//!
//! Loading order is defaults, then the file, then `--set path=value`
//! overrides in command-line order, then the `HALO_SEED` environment variable.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use halo_core::harness::SimConfig;
use toml::{Table, Value};

pub const OUTPUT_DIR_KEY: &str = "output_dir";
pub const DEFAULT_OUTPUT_DIR: &str = "halo-out";
pub const SEED_ENV: &str = "HALO_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub sim: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            sim: SimConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        let mut table = sim_table(&self.sim);
        table.insert(
            OUTPUT_DIR_KEY.into(),
            Value::String(self.output_dir.display().to_string()),
        );
        toml::to_string_pretty(&table).expect("config serializes")
    }
}

fn sim_table(sim: &SimConfig) -> Table {
    Table::try_from(sim).expect("SimConfig serializes to a TOML table")
}

/// Parses the right-hand side of an override as a TOML value, falling back to
/// a bare string so `--set perception=halss` works without quotes.
fn parse_value(raw: &str) -> Value {
    let doc = format!("v = {raw}");
    match doc.parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn apply_override(root: &mut Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override {assignment:?} is not of the form key=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("override {assignment:?} has an empty key segment");
    }
    let mut table = root;
    for key in &keys[..keys.len() - 1] {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {assignment:?}: {key:?} is not a table"))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

/// Builds the effective configuration.
pub fn load(
    path: Option<&Path>,
    overrides: &[String],
    env_seed: Option<String>,
) -> Result<RunConfig> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("cannot read config {}", p.display()))?;
            text.parse::<Table>()
                .map_err(|e| anyhow!("{}: {e}", p.display()))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let output_dir = match doc.remove(OUTPUT_DIR_KEY) {
        Some(Value::String(s)) => PathBuf::from(s),
        Some(other) => bail!("{OUTPUT_DIR_KEY} must be a string, got {other}"),
        None => PathBuf::from(DEFAULT_OUTPUT_DIR),
    };
    let mut sim: SimConfig = Value::Table(doc).try_into().map_err(|e: toml::de::Error| {
        let origin = path.map_or_else(|| "configuration".to_string(), |p| p.display().to_string());
        anyhow!("{origin}: {}", e.message())
    })?;
    if let Some(seed) = env_seed {
        sim.seed = seed
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={seed:?} is not an unsigned integer"))?;
    }
    sim.validate()?;
    Ok(RunConfig { output_dir, sim })
}

/// Every leaf key of the default configuration with its default value.
pub fn key_listing() -> String {
    fn walk(prefix: &str, table: &Table, out: &mut Vec<(String, String)>) {
        for (k, v) in table {
            let path = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            match v {
                Value::Table(t) => walk(&path, t, out),
                other => out.push((path, other.to_string())),
            }
        }
    }
    let mut table = sim_table(&SimConfig::default());
    table.insert(
        OUTPUT_DIR_KEY.into(),
        Value::String(DEFAULT_OUTPUT_DIR.into()),
    );
    let mut rows = Vec::new();
    walk("", &table, &mut rows);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut text = String::from("Configuration keys (TOML; override with --set key=value):\n");
    for (k, v) in rows {
        text.push_str(&format!("  {k:width$}  {v}\n"));
    }
    text.push_str(&format!(
        "\n{SEED_ENV} overrides `seed` after the file and --set overrides.\n"
    ));
    text
}
