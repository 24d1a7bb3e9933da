//! On-disk checkpoints: `metadata.json` plus `params.bin` (little-endian
//! `f64`, nodes in spec order, each node's tensors in declared order).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::zoo::spec::ArchitectureSpec;

pub const FORMAT_VERSION: u32 = 1;

/// Identifies one trained model variant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRef {
    pub architecture_id: String,
    pub dataset_id: String,
    #[serde(default)]
    pub class_subset: Option<Vec<usize>>,
    #[serde(default = "default_tag")]
    pub checkpoint_tag: String,
}

fn default_tag() -> String {
    "latest".to_string()
}

impl ModelRef {
    pub fn new(architecture_id: &str, dataset_id: &str) -> Self {
        Self {
            architecture_id: architecture_id.into(),
            dataset_id: dataset_id.into(),
            class_subset: None,
            checkpoint_tag: default_tag(),
        }
    }

    /// Checks the subset invariant against the dataset's class count.
    pub fn validate(&self, class_count: usize) -> Result<()> {
        if let Some(sub) = &self.class_subset {
            if sub.is_empty() {
                return Err(Error::invalid("class_subset must be non-empty"));
            }
            if sub.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(
                    "class_subset must be sorted with unique indices",
                ));
            }
            if let Some(bad) = sub.iter().find(|&&c| c >= class_count) {
                return Err(Error::invalid(format!(
                    "class_subset index {bad} outside dataset with {class_count} classes"
                )));
            }
        }
        Ok(())
    }

    /// Directory name under a checkpoint root.
    pub fn key(&self) -> String {
        let subset = match &self.class_subset {
            None => "all".to_string(),
            Some(s) => s
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("-"),
        };
        format!(
            "{}__{}__{}__{}",
            self.architecture_id, self.dataset_id, subset, self.checkpoint_tag
        )
    }

    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub architecture_id: String,
    pub spec: ArchitectureSpec,
    pub dataset_id: String,
    pub class_subset: Option<Vec<usize>>,
    pub checkpoint_tag: String,
    pub epochs_trained: usize,
    pub seed: u64,
    pub bn_calibrated: bool,
    pub parameter_count: usize,
}

pub fn exists(reference: &ModelRef, root: &Path) -> bool {
    reference.dir(root).join("metadata.json").is_file()
}

/// Writes a checkpoint atomically: files go to a temporary sibling directory
/// that is renamed into place.
pub fn save_checkpoint(model: &Model, reference: &ModelRef, root: &Path) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let info = model.info();
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        architecture_id: model.spec().id.clone(),
        spec: model.spec().clone(),
        dataset_id: reference.dataset_id.clone(),
        class_subset: reference.class_subset.clone(),
        checkpoint_tag: reference.checkpoint_tag.clone(),
        epochs_trained: info.epochs_trained,
        seed: info.seed,
        bn_calibrated: info.bn_calibrated,
        parameter_count: model.parameter_count(),
    };
    let dest = reference.dir(root);
    let tmp = root.join(format!(
        ".tmp-{}-{}-{}",
        reference.key(),
        std::process::id(),
        chrono::Utc::now().timestamp_nanos_opt().unwrap_or_default()
    ));
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let meta_path = tmp.join("metadata.json");
    fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)
        .map_err(|e| Error::io(&meta_path, e))?;
    let bytes: Vec<u8> = model
        .flat_params()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    let params_path = tmp.join("params.bin");
    fs::write(&params_path, bytes).map_err(|e| Error::io(&params_path, e))?;
    if dest.exists() {
        fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
    }
    fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))?;
    Ok(dest)
}

pub fn load_checkpoint(reference: &ModelRef, root: &Path) -> Result<Model> {
    let dir = reference.dir(root);
    let meta_path = dir.join("metadata.json");
    if !meta_path.is_file() {
        return Err(Error::NotFound {
            what: "checkpoint",
            id: reference.key(),
        });
    }
    let raw = fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: CheckpointMeta = serde_json::from_slice(&raw).map_err(|e| Error::Corrupt {
        what: "checkpoint metadata",
        path: meta_path.clone(),
        reason: e.to_string(),
    })?;
    if meta.architecture_id != reference.architecture_id || meta.spec.id != meta.architecture_id {
        return Err(Error::Corrupt {
            what: "checkpoint metadata",
            path: meta_path,
            reason: format!(
                "architecture '{}' does not match requested '{}'",
                meta.architecture_id, reference.architecture_id
            ),
        });
    }
    let mut model = Model::build(&meta.spec, meta.seed)?;
    let params_path = dir.join("params.bin");
    let bytes = fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
    let expected = model.parameter_count();
    if bytes.len() != expected * 8 || meta.parameter_count != expected {
        return Err(Error::Corrupt {
            what: "checkpoint parameters",
            path: params_path,
            reason: format!("expected {} bytes, found {}", expected * 8, bytes.len()),
        });
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    model.set_flat_params(&flat)?;
    let info = model.info_mut();
    info.epochs_trained = meta.epochs_trained;
    info.bn_calibrated = meta.bn_calibrated;
    Ok(model)
}
