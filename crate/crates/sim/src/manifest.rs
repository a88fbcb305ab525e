//! Run manifests: enough to reproduce a run exactly. No timestamps, so
//! identical runs write identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::report::write_json;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub git_rev: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: String,
    /// Output file name to SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Revision of the enclosing git checkout, if any.
fn git_rev() -> String {
    Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        let config = cfg.to_toml();
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            git_rev: git_rev(),
            command: command.into(),
            seed: cfg.seed,
            config_sha256: sha256_hex(config.as_bytes()),
            config,
            outputs: BTreeMap::new(),
        }
    }

    /// Records the hash of an output file in `dir`.
    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        let p = dir.join(name);
        let bytes = fs::read(&p).map_err(|e| CliError::io(&p, e))?;
        self.outputs.insert(name.into(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
