//! Config file loading: a single TOML file with the run parameters at the
//! top level plus optional [converge] and [compare] sections, and
//! `--set key=value` overrides applied before deserialization.

use std::path::Path;

use clawpart::RunConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration: exit code 2.
    Config(String),
    /// Solver or I/O failure: exit code 1.
    Run(String),
}

impl From<clawpart::Error> for CliError {
    fn from(e: clawpart::Error) -> Self {
        match e {
            clawpart::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

fn default_reference_factor() -> usize {
    8
}

fn default_fit_points() -> usize {
    3
}

fn default_fv_cfl() -> f64 {
    0.45
}

fn default_reference_cfl() -> f64 {
    0.9
}

/// Parameters of a convergence study (the [converge] section).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeSection {
    /// Initial particle spacings h; d_max follows as d_max_factor * h.
    pub spacings: Vec<f64>,
    /// Evaluation times.
    pub times: Vec<f64>,
    /// The reference run resolves the finest spacing by this factor.
    #[serde(default = "default_reference_factor")]
    pub reference_factor: usize,
    /// Number of finest levels entering the slope fit.
    #[serde(default = "default_fit_points")]
    pub fit_points: usize,
    /// Cross-check the reference against a finite-volume solve with this
    /// many cells at the first evaluation time (0 disables).
    #[serde(default)]
    pub fv_crosscheck_cells: usize,
}

/// Parameters of a particle-vs-finite-volume comparison (the [compare]
/// section).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareSection {
    pub times: Vec<f64>,
    /// Cell count of the coarse second-order finite-volume run.
    pub fv_cells: usize,
    #[serde(default = "default_fv_cfl")]
    pub fv_cfl: f64,
    /// Cell count of the fine first-order reference solve.
    pub reference_cells: usize,
    #[serde(default = "default_reference_cfl")]
    pub reference_cfl: f64,
}

pub struct LoadedConfig {
    pub run: RunConfig,
    pub converge: Option<ConvergeSection>,
    pub compare: Option<CompareSection>,
    /// The full document after overrides, echoed as effective_config.json.
    pub doc: toml::Value,
}

pub fn load(path: &Path, overrides: &[String]) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut doc: toml::Value = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for spec in overrides {
        apply_override(&mut doc, spec)?;
    }
    let run: RunConfig = doc
        .clone()
        .try_into()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    run.validate()?;
    let converge = section(&doc, "converge")?;
    let compare = section(&doc, "compare")?;
    Ok(LoadedConfig {
        run,
        converge,
        compare,
        doc,
    })
}

fn section<T: serde::de::DeserializeOwned>(
    doc: &toml::Value,
    name: &str,
) -> Result<Option<T>, CliError> {
    match doc.get(name) {
        None => Ok(None),
        Some(v) => v
            .clone()
            .try_into()
            .map(Some)
            .map_err(|e| CliError::Config(format!("[{name}]: {e}"))),
    }
}

/// Apply one `key=value` override. Dotted keys address nested tables; the
/// value is parsed as a TOML literal (falling back to a bare string).
fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{spec}' is not KEY=VALUE")))?;
    let value = parse_value(raw.trim());
    let mut cursor = doc;
    let parts: Vec<&str> = key.trim().split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            let table = cursor
                .as_table_mut()
                .ok_or_else(|| CliError::Config(format!("'{key}' does not address a table")))?;
            table.insert(part.to_string(), value);
            return Ok(());
        }
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("'{key}' does not address a table")))?;
        cursor = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    unreachable!()
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_parses_typed_values() {
        let mut doc: toml::Value = toml::from_str("a = 1\n[nested]\nb = 2").unwrap();
        apply_override(&mut doc, "a=3.5").unwrap();
        apply_override(&mut doc, "nested.b=[1,2]").unwrap();
        apply_override(&mut doc, "name=hello").unwrap();
        assert_eq!(doc["a"].as_float(), Some(3.5));
        assert_eq!(doc["nested"]["b"].as_array().unwrap().len(), 2);
        assert_eq!(doc["name"].as_str(), Some("hello"));
    }

    #[test]
    fn override_rejects_missing_equals() {
        let mut doc: toml::Value = toml::from_str("a = 1").unwrap();
        assert!(apply_override(&mut doc, "nonsense").is_err());
    }
}
