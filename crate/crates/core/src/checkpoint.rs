//! Checkpoint directory: `manifest.json` plus `params.bin`, a flat blob of
//! little-endian `f64` values in manifest order.

use std::fs;
use std::path::Path;

use profiti_autodiff::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::ChannelStats;
use crate::error::{ProfitiError, Result};
use crate::model::{ModelConfig, Profiti};

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into `params.bin`, in values.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub config: ModelConfig,
    pub channels: usize,
    pub stats: ChannelStats,
    pub params: Vec<ParamEntry>,
}

pub fn save(model: &Profiti, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ProfitiError::io(dir, e))?;
    let mut params = Vec::with_capacity(model.store().len());
    let mut blob = Vec::with_capacity(model.store().numel() * 8);
    let mut offset = 0;
    for (_, name, t) in model.store().iter() {
        params.push(ParamEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
        });
        offset += t.numel();
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        config: model.config().clone(),
        channels: model.channels(),
        stats: model.stats().clone(),
        params,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| ProfitiError::io(&path, e))?;
    let path = dir.join(PARAMS_FILE);
    fs::write(&path, blob).map_err(|e| ProfitiError::io(&path, e))
}

pub fn load(dir: impl AsRef<Path>) -> Result<Profiti> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| ProfitiError::io(&path, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(SCHEMA_VERSION as u64) {
        return Err(ProfitiError::Checkpoint(format!(
            "unsupported schema version {version:?}, expected {SCHEMA_VERSION}"
        )));
    }
    let manifest: Manifest = serde_json::from_value(raw)?;
    let path = dir.join(PARAMS_FILE);
    let blob = fs::read(&path).map_err(|e| ProfitiError::io(&path, e))?;
    if blob.len() % 8 != 0 {
        return Err(ProfitiError::Checkpoint(format!("{PARAMS_FILE} length {} is not a multiple of 8", blob.len())));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut store = ParamStore::new();
    for p in &manifest.params {
        let n: usize = p.shape.iter().product();
        let slice = values.get(p.offset..p.offset + n).ok_or_else(|| {
            ProfitiError::Checkpoint(format!("parameter `{}` extends past the end of {PARAMS_FILE}", p.name))
        })?;
        store.insert(p.name.clone(), Tensor::new(p.shape.clone(), slice.to_vec())?);
    }
    Profiti::from_parts(manifest.config, manifest.channels, manifest.stats, store)
}
