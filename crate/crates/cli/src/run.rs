//! Run directory layout and the `run.json` manifest.
//!
//! ```text
//! run/
//!   run.json                  manifest with a sha256 per artifact
//!   store.json  split.json
//!   embeddings.vlrb  embeddings.manifest.json
//!   checkpoints/<name>/trial<t>.vlrk  checkpoints/<name>/train.json
//!   reports/<name>.json  reports/<name>.meta.json
//!   leaderboard.csv  groups/<group>.csv
//!   frontier.json  frontier.csv
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use vlrb::soft_label::Lambda;

use crate::CliError;

pub const MANIFEST: &str = "run.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub store: Option<FileRecord>,
    pub embeddings: Option<FileRecord>,
    pub embeddings_manifest: Option<FileRecord>,
    pub split: Option<FileRecord>,
    pub checkpoints: BTreeMap<String, Vec<FileRecord>>,
    pub reports: BTreeMap<String, FileRecord>,
    pub lambda_grid: Vec<Lambda>,
    pub seeds: BTreeMap<String, u64>,
    /// sha256 of each trained router's spec.
    pub config_hashes: BTreeMap<String, String>,
}

pub struct Run {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

impl Run {
    /// Starts a fresh manifest, creating the directory if needed.
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), manifest: RunManifest::default() })
    }

    pub fn open(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let manifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn save(&self) -> Result<(), CliError> {
        let json = serde_json::to_vec_pretty(&self.manifest).expect("manifest serializes");
        write_file(&self.dir.join(MANIFEST), &json)
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Hashes a file already written under the run directory.
    pub fn record(&self, rel: &str) -> Result<FileRecord, CliError> {
        Ok(FileRecord { path: rel.to_string(), sha256: sha256_file(&self.path(rel))? })
    }

    /// Path of a recorded artifact after checking it still matches its hash.
    pub fn verified(&self, what: &str, record: Option<&FileRecord>) -> Result<PathBuf, CliError> {
        let record = record.ok_or_else(|| CliError::Missing(format!("run has no {what}; run the earlier stage first")))?;
        let path = self.path(&record.path);
        let actual = sha256_file(&path)?;
        if actual != record.sha256 {
            return Err(CliError::Validation(format!(
                "{} changed since it was recorded (sha256 {actual}, manifest {})",
                path.display(),
                record.sha256
            )));
        }
        Ok(path)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
