//! Run configuration and output writers.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use gapmeans_core::means::ModePolicy;
use gapmeans_core::Result;
use serde::Serialize;
use serde_json::Value;

/// Everything needed to reproduce an output, embedded in each one.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub params: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    pub grid: GridSpec,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub mode: ModePolicy,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GridSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j_max: Option<u32>,
    pub extra_radii: Vec<f64>,
}

impl RunConfig {
    pub fn new(command: &'static str, seed: u64, mode: ModePolicy) -> Self {
        RunConfig {
            tool: "gapmeans",
            version: env!("CARGO_PKG_VERSION"),
            command,
            params: Value::Object(Default::default()),
            weight: None,
            grid: GridSpec::default(),
            outputs: Vec::new(),
            seed,
            mode,
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params[key] = serde_json::to_value(value).expect("parameter serializes");
        self
    }

    pub fn weight(mut self, spec: impl ToString) -> Self {
        self.weight = Some(spec.to_string());
        self
    }

    pub fn grid(mut self, j_max: Option<u32>, extra_radii: &[f64]) -> Self {
        self.grid = GridSpec { j_max, extra_radii: extra_radii.to_vec() };
        self
    }

    pub fn output(mut self, path: Option<&PathBuf>) -> Self {
        if let Some(p) = path {
            self.outputs.push(p.display().to_string());
        }
        self
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_text(v: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Writes a JSON document with the run configuration under `run_config`.
pub fn emit_json(path: Option<&Path>, mut doc: Value, cfg: &RunConfig) -> Result<()> {
    doc["run_config"] = cfg.to_value();
    emit(path, &json_text(&doc)?)
}

/// Path of the configuration written next to a CSV output.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

/// Writes CSV text, with the run configuration in a sidecar when going to a file.
pub fn emit_csv(path: Option<&Path>, csv: &[u8], cfg: &RunConfig) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, csv)?;
            fs::write(sidecar_path(p), json_text(&cfg.to_value())?)?;
        }
        None => io::stdout().lock().write_all(csv)?,
    }
    Ok(())
}
