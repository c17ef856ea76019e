//! Binary checkpoint format.
//!
//! Layout: the 6 bytes `VBSSL1`, a little-endian `u32` metadata length, the
//! JSON metadata, then every parameter and buffer as little-endian `f32` in
//! store order (encoder blocks, projector hidden layers, projector output,
//! classifier; within a layer: weight, bias, running mean, running variance).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::network::Model;
use super::params::{EntryKind, ParamStore};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"VBSSL1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryMeta {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the value section, in `f32` elements.
    pub offset: usize,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub entries: Vec<EntryMeta>,
    pub seed: u64,
    pub epoch: usize,
    /// Class names in label-index order; empty for pretrained encoders.
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    pub epoch: usize,
    pub labels: Vec<String>,
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for e in ckpt.model.params.entries() {
        entries.push(EntryMeta { name: e.name.clone(), shape: e.shape.clone(), offset, kind: e.kind });
        offset += e.values.len();
    }
    let meta = CheckpointMeta {
        config: ckpt.model.config.clone(),
        entries,
        seed: ckpt.seed,
        epoch: ckpt.epoch,
        labels: ckpt.labels.clone(),
    };
    let json = serde_json::to_vec(&meta).map_err(|source| Error::Json { context: "checkpoint metadata".into(), source })?;
    let mut out = Vec::with_capacity(10 + json.len() + 4 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for e in ckpt.model.params.entries() {
        for &v in &e.values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint> {
    let bad = |detail: &str| Error::Checkpoint { path: path.to_path_buf(), detail: detail.to_string() };
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(bad("missing VBSSL1 magic"));
    }
    let len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(10..10 + len).ok_or_else(|| bad("truncated metadata"))?;
    let meta: CheckpointMeta =
        serde_json::from_slice(body).map_err(|source| Error::Json { context: format!("{} metadata", path.display()), source })?;
    let values = &bytes[10 + len..];
    if values.len() % 4 != 0 {
        return Err(bad("value section is not a whole number of f32"));
    }
    let floats: Vec<f64> = values
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();

    let mut store = ParamStore::default();
    for e in &meta.entries {
        let n: usize = e.shape.iter().product();
        let slice = floats.get(e.offset..e.offset + n).ok_or_else(|| bad(&format!("entry {} runs past the value section", e.name)))?;
        store.push(e.name.clone(), e.shape.clone(), slice.to_vec(), e.kind)?;
    }
    let total: usize = meta.entries.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    if total != floats.len() {
        return Err(bad(&format!("metadata describes {total} values, file holds {}", floats.len())));
    }
    let model = Model::from_parts(meta.config, store).map_err(|e| bad(&e.to_string()))?;
    Ok(Checkpoint { model, seed: meta.seed, epoch: meta.epoch, labels: meta.labels })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(ckpt)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
