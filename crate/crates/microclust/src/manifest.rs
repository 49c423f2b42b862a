use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Provenance record written next to a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    pub seed: u64,
    pub jobs: usize,
    /// Fully resolved settings; feeding them back through `--config`
    /// reproduces the outputs.
    pub config: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn file_name(subcommand: &str) -> String {
        format!("{}_manifest.json", subcommand.replace('-', "_"))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.subcommand));
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
