//! `<stem>.weights.json` manifest plus `<stem>.weights.bin` blob of
//! little-endian f32 values in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cardioquant_tensor::{ParamStore, Tensor};

use super::{Architecture, ModelKind, ModelWeights, TrainingMeta};
use crate::dataset::sha256_hex;
use crate::error::{Error, Result};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub format_version: u32,
    pub architecture: String,
    pub parameters: Vec<ParamRecord>,
    pub blob_sha256: String,
    pub training: Option<TrainingMeta>,
}

/// Manifest and blob paths for a stem such as `models/0/direct`.
pub fn weight_paths(stem: &Path) -> (PathBuf, PathBuf) {
    let name = stem.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    (
        stem.with_file_name(format!("{name}.weights.json")),
        stem.with_file_name(format!("{name}.weights.bin")),
    )
}

pub fn save_weights(w: &ModelWeights, stem: &Path) -> Result<()> {
    w.check_plan()?;
    let (json_path, bin_path) = weight_paths(stem);
    if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut blob = Vec::new();
    let mut parameters = Vec::with_capacity(w.store.len());
    for e in w.store.entries() {
        parameters.push(ParamRecord {
            name: e.name.clone(),
            shape: e.value.shape().to_vec(),
            offset: blob.len(),
            trainable: e.trainable,
        });
        for v in e.value.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = WeightManifest {
        format_version: WEIGHT_FORMAT_VERSION,
        architecture: w.architecture.to_string(),
        parameters,
        blob_sha256: sha256_hex(&blob),
        training: w.meta.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse(&json_path, e.to_string()))?;
    text.push('\n');
    fs::write(&bin_path, &blob).map_err(|e| Error::io(&bin_path, e))?;
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

/// Loads and verifies weights. With `expected`, a network of another kind
/// is rejected before anything else is read.
pub fn load_weights(stem: &Path, expected: Option<ModelKind>) -> Result<ModelWeights> {
    let (json_path, bin_path) = weight_paths(stem);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: WeightManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse(&json_path, format!("malformed weight manifest: {e}")))?;
    if manifest.format_version != WEIGHT_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            path: json_path,
            found: manifest.format_version,
            expected: WEIGHT_FORMAT_VERSION,
        });
    }
    let architecture: Architecture = manifest
        .architecture
        .parse()
        .map_err(|e| Error::PlanMismatch(format!("{}: {e}", json_path.display())))?;
    if let Some(kind) = expected {
        if architecture.kind != kind {
            return Err(Error::ArchitectureMismatch {
                expected: kind.to_string(),
                found: manifest.architecture,
            });
        }
    }

    let plan = architecture.plan();
    let mut offset = 0;
    let mismatch = |detail: String| Error::PlanMismatch(format!("{}: {detail}", json_path.display()));
    if plan.len() != manifest.parameters.len() {
        return Err(mismatch(format!(
            "{architecture} has {} tensors, manifest lists {}",
            plan.len(),
            manifest.parameters.len()
        )));
    }
    for (p, r) in plan.iter().zip(&manifest.parameters) {
        if p.name != r.name || p.shape != r.shape || p.trainable != r.trainable || r.offset != offset {
            return Err(mismatch(format!(
                "expected {} {:?} at byte {offset}, manifest has {} {:?} at byte {}",
                p.name, p.shape, r.name, r.shape, r.offset
            )));
        }
        offset += 4 * p.shape.iter().product::<usize>();
    }

    let blob = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let actual = sha256_hex(&blob);
    if actual != manifest.blob_sha256 {
        return Err(Error::Checksum { path: bin_path, expected: manifest.blob_sha256, actual });
    }
    if blob.len() != offset {
        return Err(mismatch(format!("blob holds {} bytes, plan needs {offset}", blob.len())));
    }

    let mut store = ParamStore::new();
    for (p, r) in plan.into_iter().zip(&manifest.parameters) {
        let n: usize = p.shape.iter().product();
        let data = blob[r.offset..r.offset + 4 * n]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        store.add(p.name, Tensor::new(p.shape, data)?, p.trainable);
    }
    Ok(ModelWeights { architecture, store, meta: manifest.training })
}
