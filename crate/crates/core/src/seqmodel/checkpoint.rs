//! Checkpoint directories: `params.bin` (little-endian f64 blob) plus
//! `meta.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, ModelConfig, ModelRole};
use crate::error::{input_err, Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const PARAMS_FILE: &str = "params.bin";
const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub vocab_hash: String,
    pub role: ModelRole,
    pub model_config: ModelConfig,
    pub checksum: String,
    pub code_version: String,
    /// Free-form provenance (pool label, data variant, learning rate, ...).
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl CheckpointMeta {
    pub fn for_model(model: &Model, config_hash: &str, vocab_hash: &str) -> Self {
        CheckpointMeta {
            format_version: CHECKPOINT_FORMAT_VERSION,
            seed: model.seed,
            config_hash: config_hash.to_string(),
            vocab_hash: vocab_hash.to_string(),
            role: model.role,
            model_config: *model.config(),
            checksum: model.checksum(),
            code_version: crate::CODE_VERSION.to_string(),
            provenance: serde_json::Value::Null,
        }
    }
}

pub fn save_checkpoint(dir: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::with_capacity(model.params().len() * 8);
    for p in model.params() {
        blob.extend_from_slice(&p.to_le_bytes());
    }
    let pf = dir.join(PARAMS_FILE);
    fs::write(&pf, blob).map_err(|e| Error::io(&pf, e))?;
    let mf = dir.join(META_FILE);
    fs::write(&mf, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(&mf, e))?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointMeta)> {
    let mf = dir.join(META_FILE);
    let text = fs::read_to_string(&mf).map_err(|e| Error::io(&mf, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text)?;
    if meta.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(input_err!(
            "checkpoint format_version {} unsupported (expected {CHECKPOINT_FORMAT_VERSION})",
            meta.format_version
        ));
    }
    let pf = dir.join(PARAMS_FILE);
    let blob = fs::read(&pf).map_err(|e| Error::io(&pf, e))?;
    if blob.len() % 8 != 0 {
        return Err(input_err!("{} is not a whole number of f64 values", pf.display()));
    }
    let params = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let model = Model::from_params(meta.model_config, params, meta.seed, meta.role)?;
    if model.checksum() != meta.checksum {
        return Err(input_err!("checksum mismatch for checkpoint {}", dir.display()));
    }
    Ok((model, meta))
}
