use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::dataset::{sha256_file, write_json};
use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance of one command run. Timestamps appear here and nowhere else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub mode: Option<String>,
    pub config: BTreeMap<String, String>,
    pub dataset: Option<String>,
    pub dataset_checksums: BTreeMap<String, String>,
    pub notes: Vec<String>,
    pub started_unix: f64,
    pub finished_unix: f64,
    /// SHA-256 of every file the run wrote, keyed by file name.
    pub outputs: BTreeMap<String, String>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            mode: None,
            config: BTreeMap::new(),
            dataset: None,
            dataset_checksums: BTreeMap::new(),
            notes: Vec::new(),
            started_unix: unix_now(),
            finished_unix: 0.0,
            outputs: BTreeMap::new(),
        }
    }

    /// Checksums `files` (relative to `out`) and writes the manifest beside them.
    pub fn finish(mut self, out: &Path, files: &[String]) -> Result<()> {
        for f in files {
            self.outputs.insert(f.clone(), sha256_file(&out.join(f))?);
        }
        self.finished_unix = unix_now();
        write_json(&out.join(MANIFEST_FILE), &self)
    }
}
