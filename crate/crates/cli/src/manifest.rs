use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::fail::{CliError, CliResult};

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
    pub inputs: Vec<InputRecord>,
    pub tool_version: String,
}

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable settings");
    hex(&Sha256::digest(bytes))
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub struct ManifestBuilder {
    command: String,
    config_digest: String,
    seed: Option<u64>,
    started_at: String,
    outputs: Vec<PathBuf>,
    inputs: Vec<InputRecord>,
}

impl ManifestBuilder {
    pub fn new<T: Serialize>(command: &str, settings: &T, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config_digest: digest_json(settings),
            seed,
            started_at: now(),
            outputs: Vec::new(),
            inputs: Vec::new(),
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(InputRecord {
            path: path.to_path_buf(),
            sha256: hex(&Sha256::digest(bytes)),
        });
        Ok(())
    }

    /// Write `<stem>.manifest.json` into `dir` and return its path.
    pub fn finish(self, dir: &Path, stem: &str) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            config_digest: self.config_digest,
            seed: self.seed,
            started_at: self.started_at,
            finished_at: now(),
            outputs: self.outputs,
            inputs: self.inputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let path = dir.join(format!("{stem}.manifest.json"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
