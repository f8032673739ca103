//! Checkpoint files: a versioned JSON snapshot of one seed's run, bound to
//! the exact config by hash. Every file in this crate is written to a
//! temporary sibling and renamed into place, so a crash never leaves a
//! partial artifact.

use std::path::Path;

use anyhow::{bail, Context, Result};
use damsgrad::benchmarks::TrainSnapshot;
use damsgrad::network::{Activation, OutputMap};
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Architecture header for runs that train a network; the flat parameter
/// array lives in `snapshot.theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetHeader {
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub output_map: OutputMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub snapshot: TrainSnapshot,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub net: Option<NetHeader>,
}

/// Writes bytes to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".into());
    let tmp = path.with_file_name(format!("{file_name}.tmp"));
    std::fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let mut json = serde_json::to_string_pretty(checkpoint)?;
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

/// Loads and verifies a checkpoint: the format version must be the one this
/// build writes and the config hash must match the config being resumed.
pub fn load_checkpoint(path: &Path, expected_hash: &str) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    let checkpoint: Checkpoint =
        serde_json::from_str(&text).context("checkpoint parse failed")?;
    if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION {
        bail!(
            "checkpoint format version {} unsupported (expected {})",
            checkpoint.format_version,
            CHECKPOINT_FORMAT_VERSION
        );
    }
    if checkpoint.config_hash != expected_hash {
        bail!(
            "checkpoint belongs to a different config (hash {}.. vs {}..)",
            &checkpoint.config_hash[..12.min(checkpoint.config_hash.len())],
            &expected_hash[..12]
        );
    }
    Ok(checkpoint)
}
