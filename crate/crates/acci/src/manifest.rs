//! Experiment manifests: a config snapshot, input fingerprints, and metric
//! results, sufficient to re-run a command and compare outputs.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed manifest: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    /// The subcommand and arguments that produced the outputs.
    pub command: String,
    /// Full configuration snapshot as a JSON value.
    pub config: serde_json::Value,
    pub seed: u64,
    /// SHA-256 hex digests of every input corpus / pair file, keyed by path.
    pub corpus_fingerprints: BTreeMap<String, String>,
    pub output_paths: Vec<String>,
    /// Metric results, if the command produced any.
    pub metrics: Option<serde_json::Value>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String, ManifestError> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 8192];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl ExperimentManifest {
    pub fn write(&self, path: &Path) -> Result<(), ManifestError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| ManifestError::Parse(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<ExperimentManifest, ManifestError> {
        let json = std::fs::read_to_string(path)?;
        serde_json::from_str(&json).map_err(|e| ManifestError::Parse(e.to_string()))
    }
}
