//! Run manifests: enough to re-run a command and reproduce its output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fsep_core::numerics::RngSeed;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    /// Resolved flag values keyed by long flag name (`input` is positional).
    pub parameters: BTreeMap<String, String>,
    pub seed: RngSeed,
    pub artifact_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(command: &str, parameters: BTreeMap<String, String>, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            parameters,
            seed: RngSeed(seed),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| CliError::schema(path, e))
    }

    /// Argument vector (without the program name) that repeats this run.
    pub fn replay_args(&self, out: Option<&Path>) -> Vec<String> {
        let mut args = vec![self.command.clone()];
        if let Some(input) = self.parameters.get("input") {
            args.push(input.clone());
        }
        for (key, value) in &self.parameters {
            match (key.as_str(), value.as_str()) {
                ("input", _) | ("out", _) | (_, "false") => {}
                (_, "true") => args.push(format!("--{key}")),
                _ => {
                    args.push(format!("--{key}"));
                    args.push(value.clone());
                }
            }
        }
        if let Some(out) = out.map(Path::to_path_buf).or_else(|| self.parameters.get("out").map(PathBuf::from)) {
            args.push("--out".into());
            args.push(out.display().to_string());
        }
        args.push("--seed".into());
        args.push(self.seed.0.to_string());
        args
    }
}

/// `<out>.manifest.json`, written next to tabular outputs.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_sidecar(out: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let path = sidecar_path(out);
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::Failed(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
}
