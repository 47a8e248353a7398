//! Provenance record written next to every run's outputs.

use std::path::{Path, PathBuf};

use capnet::data::DATA_DIR_ENV;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{read_text, write_file, CliError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct DatasetRef {
    pub path: PathBuf,
    /// SHA-256 of the dataset's `manifest.json`, which in turn lists the
    /// digest of every split file.
    pub manifest_sha256: String,
}

#[derive(Debug, Serialize)]
pub struct ExperimentManifest<C: Serialize> {
    pub tool_version: &'static str,
    /// SHA-256 over the tool version, the effective config and the dataset
    /// digest.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: C,
    pub dataset: Option<DatasetRef>,
    /// Files written by the command, relative to the output directory.
    pub outputs: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl<C: Serialize> ExperimentManifest<C> {
    pub fn new(config: C, seeds: Vec<u64>, dataset: Option<DatasetRef>, outputs: Vec<String>) -> Self {
        #[derive(Serialize)]
        struct Hashed<'a, C> {
            tool_version: &'a str,
            config: &'a C,
            dataset_sha256: Option<&'a str>,
        }
        let hashed = Hashed {
            tool_version: TOOL_VERSION,
            config: &config,
            dataset_sha256: dataset.as_ref().map(|d| d.manifest_sha256.as_str()),
        };
        let config_hash = sha256_hex(serde_json::to_string(&hashed).expect("config serializes").as_bytes());
        Self {
            tool_version: TOOL_VERSION,
            config_hash,
            seeds,
            config,
            dataset,
            outputs,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_file(&dir.join(MANIFEST_FILE), text)
    }
}

pub fn dataset_ref(dir: &Path) -> Result<DatasetRef, CliError> {
    let text = read_text(&dir.join(MANIFEST_FILE), "dataset manifest")?;
    Ok(DatasetRef {
        path: dir.to_path_buf(),
        manifest_sha256: sha256_hex(text.as_bytes()),
    })
}

/// Relative dataset paths that do not exist under the working directory are
/// looked up under `$CAPNET_DATA_DIR`.
pub fn resolve_dataset(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
            return PathBuf::from(root).join(path);
        }
    }
    path.to_path_buf()
}
