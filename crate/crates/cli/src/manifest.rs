//! The JSON record of a run: what was asked, what was written, what to check.

use std::path::Path;

use mcp_core::{Table, Unit};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// File name of the manifest inside the output directory.
pub const MANIFEST_FILE: &str = "manifest.json";

/// One written file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    /// Lowercase hex SHA-256 of the file bytes.
    pub sha256: String,
    pub bytes: u64,
    /// Data rows, header excluded.
    pub rows: usize,
}

/// Everything a run wrote, in write order. Holds no timestamps, so equal
/// inputs give equal manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub unit: Unit,
    /// The effective configuration of the pipeline, defaults filled in.
    pub config: Value,
    pub files: Vec<FileEntry>,
    pub warnings: Vec<String>,
    pub summary: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `table` as `dir/name` and returns its entry.
pub fn emit_csv(dir: &Path, name: &str, table: &Table) -> Result<FileEntry> {
    let path = dir.join(name);
    table.write_csv(&path)?;
    let bytes = std::fs::read(&path).map_err(io(&path))?;
    Ok(FileEntry {
        path: name.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
        rows: table.len(),
    })
}

impl Manifest {
    /// Writes the manifest as pretty JSON into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(io(&path))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(io(&path))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Names of listed files whose bytes no longer match their hash.
    pub fn stale_files(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| {
                std::fs::read(dir.join(&f.path)).map_or(true, |b| sha256_hex(&b) != f.sha256)
            })
            .map(|f| f.path.clone())
            .collect()
    }
}
