//! On-disk formats: a directory holding `manifest.json` plus one raw
//! little-endian f32 blob per array, each guarded by a SHA-256 digest.

mod blob;
mod checkpoint;
mod config;
mod dataset;

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub use blob::{atomic_write, read_blob, sha256_hex, write_blob, BlobEntry};
pub use checkpoint::{
    load_model, load_router, save_model, save_router, CheckpointKind, CheckpointManifest, ModelCheckpoint,
    RouterCheckpoint, TrainingMeta,
};
pub use config::{parse_los_mask, parse_waypoints, ArchSpec, RunConfig, ScenarioOverrides};
pub use dataset::{load_dataset, save_dataset, DatasetManifest, SplitIndices};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "1.0";
pub const FORMAT_MAJOR: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

/// Accepts any minor revision of the supported major version.
pub fn check_version(found: &str) -> Result<()> {
    let major = found.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major == Some(FORMAT_MAJOR) {
        Ok(())
    } else {
        Err(Error::Migration {
            found: found.to_string(),
            expected: FORMAT_MAJOR,
        })
    }
}

pub(crate) fn write_manifest<T: Serialize>(dir: &Path, manifest: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Data(format!("manifest encoding: {e}")))?;
    text.push('\n');
    atomic_write(&dir.join(MANIFEST), text.as_bytes())
}

pub(crate) fn read_manifest<T: DeserializeOwned>(dir: &Path, kind: &str) -> Result<T> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: invalid JSON: {e}", path.display())))?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Data(format!("{} has no format_version", path.display())))?;
    check_version(version)?;
    let found = value.get("kind").and_then(|v| v.as_str()).unwrap_or("");
    if found != kind {
        return Err(Error::Data(format!("{} describes a {found}, expected a {kind}", path.display())));
    }
    serde_json::from_value(value).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
