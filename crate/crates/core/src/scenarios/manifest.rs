//! Run manifests: enough provenance to repeat a run exactly.

use chrono::{DateTime, SecondsFormat, Utc};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Subcommand and arguments as invoked.
    pub command: Vec<String>,
    /// SHA-256 of the effective config exactly as written to `config.json`.
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    /// Where each effective setting came from: `flag`, `file` or `default`.
    pub setting_sources: IndexMap<String, String>,
    pub output_dir: PathBuf,
    pub started_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
}

pub fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: Vec<String>, config_bytes: &[u8], seed: u64, output_dir: &Path) -> Self {
        Self {
            tool: "acqsim".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            config_hash: sha256_hex(config_bytes),
            seed,
            inputs: Vec::new(),
            setting_sources: IndexMap::new(),
            output_dir: output_dir.to_path_buf(),
            started_at: timestamp(Utc::now()),
            finished_at: None,
        }
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(timestamp(Utc::now()));
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
