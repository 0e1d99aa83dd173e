//! Checkpoints: a directory of TNSR parameter dumps plus a JSON manifest.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Model, ModelConfig};
use crate::tensor::{read_tensor, write_tensor, FixtureError};

pub const CHECKPOINT_FORMAT: &str = "stswin-checkpoint-v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("{path}: {detail}")]
    Manifest { path: String, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    /// Training stage that produced this checkpoint: init, stage1..stage3.
    pub stage: String,
    pub config: ModelConfig,
    pub params: Vec<ParamEntry>,
    /// Stage-specific metadata echoed by the trainer (plan, seeds, EMA
    /// momentum, key sources).
    #[serde(default)]
    pub extra: serde_json::Value,
}

pub fn save_checkpoint(
    dir: &Path,
    model: &Model,
    stage: &str,
    extra: serde_json::Value,
) -> Result<PathBuf, CheckpointError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CheckpointError::Io { path: dir.display().to_string(), source: e })?;
    let mut entries = Vec::new();
    for (i, (name, t)) in model.named_params().iter().enumerate() {
        let file = format!("p{i:04}.tnsr");
        write_tensor(&dir.join(&file), t)?;
        entries.push(ParamEntry { name: name.clone(), shape: t.shape().to_vec(), file });
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        stage: stage.to_string(),
        config: model.cfg.clone(),
        params: entries,
        extra,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CheckpointError::Manifest { path: path.display().to_string(), detail: e.to_string() })?;
    std::fs::write(&path, json)
        .map_err(|e| CheckpointError::Io { path: path.display().to_string(), source: e })?;
    Ok(dir.to_path_buf())
}

pub fn load_checkpoint(dir: &Path) -> Result<(Model, CheckpointManifest), CheckpointError> {
    let mpath = dir.join("manifest.json");
    let text = std::fs::read_to_string(&mpath)
        .map_err(|e| CheckpointError::Io { path: mpath.display().to_string(), source: e })?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| CheckpointError::Manifest { path: mpath.display().to_string(), detail: e.to_string() })?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(CheckpointError::Manifest {
            path: mpath.display().to_string(),
            detail: format!("unknown format {:?}", manifest.format),
        });
    }
    let mut dummy = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let model = Model::new(&manifest.config, &mut dummy);
    let params = model.named_params();
    if params.len() != manifest.params.len() {
        return Err(CheckpointError::Manifest {
            path: mpath.display().to_string(),
            detail: format!("{} params on disk, model has {}", manifest.params.len(), params.len()),
        });
    }
    for ((name, tensor), entry) in params.iter().zip(&manifest.params) {
        if name != &entry.name || tensor.shape() != entry.shape.as_slice() {
            return Err(CheckpointError::Manifest {
                path: mpath.display().to_string(),
                detail: format!(
                    "parameter mismatch: model {name} {:?} vs manifest {} {:?}",
                    tensor.shape(),
                    entry.name,
                    entry.shape
                ),
            });
        }
        let loaded = read_tensor(&dir.join(&entry.file))?;
        tensor.set_data(loaded.to_vec());
    }
    Ok((model, manifest))
}
