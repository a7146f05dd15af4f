//! Run manifest: what ran, what it produced, and the integrity hashes.
//!
//! The manifest is the only output that is not byte-reproducible — it
//! records wall-clock per stage. Every other file a run writes is a pure
//! function of (config bytes, effective seed, data).

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shapaudit_core::dataset::DataTable;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub wall_ms: u128,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionHash {
    pub partition: String,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub config_version: u32,
    pub config_hash: String,
    pub master_seed: u64,
    pub command: String,
    pub stages: Vec<StageRecord>,
    /// Untouched-partition proof: before/after content hashes of every
    /// protected (test/validation) partition.
    pub partition_hashes: Vec<PartitionHash>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, config_version: u32, config_hash: String, seed: u64) -> Self {
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_version,
            config_hash,
            master_seed: seed,
            command: command.to_string(),
            stages: Vec::new(),
            partition_hashes: Vec::new(),
            failure: None,
        }
    }

    pub fn write(&self, out_dir: &Path) -> std::io::Result<()> {
        shapaudit_core::report::write_json(&out_dir.join("manifest.json"), self)
    }

    pub fn all_outputs(&self) -> Vec<PathBuf> {
        self.stages
            .iter()
            .flat_map(|s| s.outputs.iter().map(PathBuf::from))
            .collect()
    }
}

/// Times one stage and collects the files it claims to have written.
pub struct StageTimer {
    name: String,
    started: Instant,
    outputs: Vec<String>,
}

impl StageTimer {
    pub fn start(name: &str) -> Self {
        log::info!("stage {name}");
        Self {
            name: name.to_string(),
            started: Instant::now(),
            outputs: Vec::new(),
        }
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(self, manifest: &mut RunManifest) {
        manifest.stages.push(StageRecord {
            name: self.name,
            wall_ms: self.started.elapsed().as_millis(),
            outputs: self.outputs,
        });
    }
}

/// Content hash of a table: feature bytes, labels, and role columns.
pub fn table_hash(table: &DataTable) -> String {
    let mut hasher = Sha256::new();
    for name in table.feature_names() {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
    }
    for row in table.rows() {
        for v in row {
            hasher.update(v.to_le_bytes());
        }
    }
    hasher.update(table.labels());
    if let Some(time) = table.time() {
        for t in time {
            hasher.update(t.to_le_bytes());
        }
    }
    if let Some(account) = table.account() {
        for a in account {
            hasher.update(a.as_bytes());
            hasher.update([0u8]);
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
