//! `ckpt-v1`: a JSON manifest plus a flat little-endian `f64` data file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optim::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "ckpt-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the data file.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub data_file: String,
    pub entries: Vec<CheckpointEntry>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

/// Data file path for a manifest: `foo.json` -> `foo.bin`.
pub fn data_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save_checkpoint(
    params: &ParamStore,
    metadata: &serde_json::Value,
    manifest_path: &Path,
) -> Result<()> {
    let bin_path = data_path(manifest_path);
    let mut bytes = Vec::with_capacity(params.param_count() * 8);
    let mut entries = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        entries.push(CheckpointEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset: bytes.len() as u64,
        });
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        data_file: bin_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        entries,
        metadata: metadata.clone(),
    };
    if let Some(dir) = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&bin_path, &bytes).map_err(|e| Error::io(&bin_path, e))?;
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))?;
    Ok(())
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::data(manifest_path, format!("bad manifest: {e}")))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(Error::data(
            manifest_path,
            format!("unsupported format `{}`", manifest.format),
        ));
    }
    let bin_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&manifest.data_file);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let mut store = ParamStore::new();
    for entry in &manifest.entries {
        let n: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start + n * 8;
        if end > bytes.len() {
            return Err(Error::data(
                &bin_path,
                format!(
                    "entry `{}` needs bytes {start}..{end}, file has {}",
                    entry.name,
                    bytes.len()
                ),
            ));
        }
        let data = bytes[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(entry.shape.clone(), data)
            .map_err(|e| Error::data(manifest_path, format!("entry `{}`: {e}", entry.name)))?;
        store.insert(entry.name.clone(), t);
    }
    Ok((store, manifest.metadata))
}
