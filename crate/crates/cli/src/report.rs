//! Deterministic report emission: CSV files plus a JSON manifest with
//! sorted keys. Identical config and seeds produce byte-identical output
//! regardless of worker count.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

/// One declared numerical check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<="` or `">="` comparison of value against threshold.
    pub comparison: &'static str,
    pub pass: bool,
}

impl Check {
    pub fn le(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, comparison: "<=", pass: value <= threshold }
    }

    pub fn ge(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, comparison: ">=", pass: value >= threshold }
    }

    /// A boolean condition reported as 1/0 against a 1 threshold.
    pub fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value: if pass { 1.0 } else { 0.0 },
            threshold: 1.0,
            comparison: ">=",
            pass,
        }
    }
}

/// Collected outputs of one command run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn push_check(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn write_file(&mut self, dir: &Path, name: &str, contents: &str) -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, contents)
            .with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }
}

/// Write `manifest.json`: config echo, seeds, every tolerance used, and the
/// pass/fail summary.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &crate::config::ExperimentConfig,
    seed: u64,
    outcome: &Outcome,
) -> Result<()> {
    let checks: Vec<Value> = outcome
        .checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "value": c.value,
                "threshold": c.threshold,
                "comparison": c.comparison,
                "pass": c.pass,
            })
        })
        .collect();
    let tolerances: serde_json::Map<String, Value> = outcome
        .checks
        .iter()
        .map(|c| (c.name.clone(), json!(c.threshold)))
        .collect();
    let files: Vec<String> = outcome
        .files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let manifest = json!({
        "command": command,
        "config": serde_json::to_value(config)?,
        "seed": seed,
        "tolerances": tolerances,
        "checks": checks,
        "outputs": files,
        "pass": outcome.pass(),
    });
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
