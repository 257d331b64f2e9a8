use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Manifest entry of one raw little-endian f32 array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub sha256: String,
}

impl BlobEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

pub const DTYPE: &str = "f32le";

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_name(name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}.f32")
}

pub fn write_blob(dir: &Path, name: &str, shape: &[usize], data: &[f32]) -> Result<BlobEntry> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::Contract(format!(
            "blob {name}: shape {shape:?} does not hold {} values",
            data.len()
        )));
    }
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let file = file_name(name);
    atomic_write(&dir.join(&file), &bytes)?;
    Ok(BlobEntry {
        name: name.to_string(),
        file,
        shape: shape.to_vec(),
        dtype: DTYPE.into(),
        sha256: sha256_hex(&bytes),
    })
}

/// Reads a blob and checks its digest and length against the manifest.
pub fn read_blob(dir: &Path, entry: &BlobEntry) -> Result<Vec<f32>> {
    if entry.dtype != DTYPE {
        return Err(Error::Data(format!("blob {} has unsupported dtype {}", entry.name, entry.dtype)));
    }
    if entry.file.contains('/') || entry.file.contains('\\') || entry.file.starts_with('.') {
        return Err(Error::Data(format!("blob file name {} is not a plain file name", entry.file)));
    }
    let path = dir.join(&entry.file);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let actual = sha256_hex(&bytes);
    if actual != entry.sha256 {
        return Err(Error::Digest {
            path,
            expected: entry.sha256.clone(),
            actual,
        });
    }
    if bytes.len() != entry.numel() * 4 {
        return Err(Error::Data(format!(
            "blob {} holds {} bytes, shape {:?} needs {}",
            entry.name,
            bytes.len(),
            entry.shape,
            entry.numel() * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn find<'a>(blobs: &'a [BlobEntry], name: &str) -> Result<&'a BlobEntry> {
    blobs
        .iter()
        .find(|b| b.name == name)
        .ok_or_else(|| Error::Data(format!("manifest lists no blob named {name}")))
}
