//! Run manifests written next to every stage output.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, Config};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    /// SHA-256 of each input, keyed by role.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each output, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, usize>,
    /// The only field that differs between identical runs.
    pub created_unix: u64,
}

pub fn digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// `SOURCE_DATE_EPOCH` when set, else the clock.
fn now() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
}

impl Manifest {
    pub fn new(command: &str, cfg: &Config) -> Self {
        Manifest {
            tool: "mechnli".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: cfg.hash(),
            config: cfg.recorded(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            counts: BTreeMap::new(),
            created_unix: now(),
        }
    }

    pub fn input(&mut self, role: &str, bytes: &[u8]) {
        self.inputs.insert(role.into(), digest(bytes));
    }

    pub fn count(&mut self, key: impl Into<String>, n: usize) {
        self.counts.insert(key.into(), n);
    }

    /// Writes `bytes` to `dir/name` and records its digest.
    pub fn emit(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(dir.join(name), bytes)
            .map_err(|e| CliError::Invariant(format!("writing {name}: {e}")))?;
        self.outputs.insert(name.into(), digest(bytes));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        let name = format!("{}.manifest.json", self.command);
        std::fs::write(dir.join(&name), text).map_err(|e| CliError::Invariant(format!("writing {name}: {e}")))
    }
}
