use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";

/// Content hashes of every artifact in a run directory. Holds no timestamps,
/// so identical runs produce identical manifests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    /// SHA-256 of the stored `config.json`, empty if the run has none.
    pub config_hash: String,
    /// File name to SHA-256, sorted by name.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn scan(dir: &Path) -> Result<Self> {
        let mut artifacts = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == MANIFEST_FILE || !entry.file_type()?.is_file() {
                continue;
            }
            artifacts.insert(name, sha256_hex(&std::fs::read(entry.path())?));
        }
        Ok(Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: artifacts.get(CONFIG_FILE).cloned().unwrap_or_default(),
            artifacts,
        })
    }

    /// Rescans `dir` and rewrites its manifest.
    pub fn refresh(dir: &Path) -> Result<Self> {
        let m = Self::scan(dir)?;
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&m)? + "\n")?;
        Ok(m)
    }
}
