use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Written next to every set of outputs so the run can be repeated.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub master_seed: u64,
    /// Every resolved setting, loadable again through `--config`.
    pub config: BTreeMap<String, String>,
    pub jobs: usize,
    pub outputs: Vec<PathBuf>,
    pub duration_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
