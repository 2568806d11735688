//! Run manifests: what ran, from which config, and how it ended.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::AppResult;
use crate::experiments::ExperimentConfig;
use crate::io::write_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Succeeded,
    ChecksFailed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the canonical config JSON, or of the raw file when it
    /// does not parse.
    pub config_sha256: String,
    pub config_path: PathBuf,
    pub tool_version: String,
    pub started_unix_ms: u64,
    pub finished_unix_ms: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub master_seed: Option<u64>,
    pub threads: Option<usize>,
    pub status: RunStatus,
    pub exit_code: Option<i32>,
    pub error: Option<String>,
}

pub fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the config's canonical serialization: field order is fixed and
/// defaults are spelled out, so equal configs hash equally.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

impl RunManifest {
    pub fn start(config_path: &Path, config_sha256: String, threads: Option<usize>) -> Self {
        Self {
            config_sha256,
            config_path: config_path.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: now_unix_ms(),
            finished_unix_ms: None,
            outputs: Vec::new(),
            master_seed: None,
            threads,
            status: RunStatus::Running,
            exit_code: None,
            error: None,
        }
    }

    pub fn finish(&mut self, status: RunStatus, exit_code: i32, error: Option<String>) {
        self.finished_unix_ms = Some(now_unix_ms());
        self.status = status;
        self.exit_code = Some(exit_code);
        self.error = error;
    }

    /// Atomic write (temporary file, then rename).
    pub fn write(&self, path: &Path) -> AppResult<()> {
        write_json(path, self)
    }
}
