use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Stage;
use crate::error::{Error, Result};
use crate::io::{file_digest, read_json, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

/// A file path relative to the run directory and its SHA-256.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(root: &Path, relative: &str) -> Result<Self> {
        Ok(Self {
            path: relative.to_string(),
            sha256: file_digest(&root.join(relative))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: Stage,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub elapsed_ms: u64,
    pub metrics: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the canonical config text the stages ran with.
    pub config_sha256: String,
    /// One entry per completed stage, in pipeline order.
    pub stages: Vec<StageEntry>,
}

impl RunManifest {
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            read_json(&path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn entry(&self, stage: Stage) -> Option<&StageEntry> {
        self.stages.iter().find(|e| e.stage == stage)
    }

    /// Replaces any previous entry for the same stage.
    pub fn record(&mut self, entry: StageEntry) {
        self.stages.retain(|e| e.stage != entry.stage);
        self.stages.push(entry);
        self.stages.sort_by_key(|e| e.stage);
    }

    /// Recomputes every recorded output digest; returns the paths whose
    /// bytes no longer match.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut stale = Vec::new();
        for f in self.stages.iter().flat_map(|e| &e.outputs) {
            let path = dir.join(&f.path);
            if !path.exists() {
                return Err(Error::invalid(format!("manifest lists missing file {}", f.path)));
            }
            if file_digest(&path)? != f.sha256 {
                stale.push(f.path.clone());
            }
        }
        Ok(stale)
    }
}
