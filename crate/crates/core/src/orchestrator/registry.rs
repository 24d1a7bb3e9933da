//! Dataset and model registries rooted at one directory.
//!
//! Layout: `datasets/<id>/{train,query,test}` hold dataset caches,
//! `models/<ref key>` holds checkpoints and `records/` holds run records.
//! An optional `registry.json` adds dataset specs and overrides the
//! training recipe.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    generate, load_dataset, save_dataset, select_classes, split, Dataset, DatasetSpec,
};
use crate::error::{Error, Result};
use crate::nn::{self, Model, Targets, TrainConfig};
use crate::zoo::{catalog, checkpoint, ModelRef};

/// Share of each generated dataset used to train zoo models.
pub const TRAIN_FRACTION: f64 = 0.3;
/// Share of the remainder handed to attackers as query data.
pub const QUERY_FRACTION: f64 = 0.75;

const SPLITS: [&str; 3] = ["train", "query", "test"];

fn blobs(id: &str, class_count: usize, overlap: f64) -> DatasetSpec {
    DatasetSpec {
        id: id.into(),
        class_count,
        samples_per_class: 1000,
        input_shape: vec![8, 8, 1],
        overlap,
        seed: 0,
    }
}

pub fn builtin_datasets() -> Vec<DatasetSpec> {
    vec![
        blobs("blobs-easy", 4, 0.0),
        blobs("blobs-medium", 4, 0.5),
        blobs("blobs-hard", 4, 1.0),
        blobs("blobs10", 10, 0.5),
    ]
}

/// Recipe for training zoo models on a cache miss.
pub fn default_recipe() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        epochs: 30,
        ..Default::default()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    #[serde(default)]
    datasets: Vec<DatasetSpec>,
    #[serde(default)]
    recipe: Option<TrainConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    pub train: Dataset,
    pub query: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub model: Model,
    pub cache_hit: bool,
    pub seconds: f64,
    pub checkpoint: PathBuf,
}

#[derive(Debug)]
pub struct Registry {
    root: PathBuf,
    datasets: BTreeMap<String, DatasetSpec>,
    recipe: TrainConfig,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Registry {
    pub fn open(root: &Path) -> Result<Self> {
        let mut datasets: BTreeMap<String, DatasetSpec> = builtin_datasets()
            .into_iter()
            .map(|d| (d.id.clone(), d))
            .collect();
        let mut recipe = default_recipe();
        let file = root.join("registry.json");
        if file.is_file() {
            let raw = fs::read(&file).map_err(|e| Error::io(&file, e))?;
            let extra: RegistryFile = serde_json::from_slice(&raw).map_err(|e| Error::Corrupt {
                what: "registry",
                path: file.clone(),
                reason: e.to_string(),
            })?;
            for d in extra.datasets {
                d.validate()?;
                datasets.insert(d.id.clone(), d);
            }
            if let Some(r) = extra.recipe {
                r.validate()?;
                recipe = r;
            }
        }
        Ok(Self {
            root: root.to_path_buf(),
            datasets,
            recipe,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn records_dir(&self) -> PathBuf {
        self.root.join("records")
    }

    pub fn recipe(&self) -> &TrainConfig {
        &self.recipe
    }

    pub fn datasets(&self) -> impl Iterator<Item = &DatasetSpec> {
        self.datasets.values()
    }

    pub fn dataset_spec(&self, id: &str) -> Result<&DatasetSpec> {
        self.datasets.get(id).ok_or_else(|| Error::NotFound {
            what: "dataset",
            id: id.to_string(),
        })
    }

    /// Serializes work on one key across threads.
    fn lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut map = self.locks.lock().unwrap_or_else(|p| p.into_inner());
        map.entry(key.to_string()).or_default().clone()
    }

    /// Train/query/test splits of a registered dataset, generated and cached
    /// on first use. With a subset, only those classes remain, relabelled in
    /// the listed order.
    pub fn splits(&self, dataset_id: &str, class_subset: Option<&[usize]>) -> Result<DataSplits> {
        let spec = self.dataset_spec(dataset_id)?.clone();
        let dir = self.root.join("datasets").join(dataset_id);
        let all = {
            let lock = self.lock(&format!("dataset:{dataset_id}"));
            let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
            if SPLITS
                .iter()
                .all(|s| dir.join(s).join("meta.json").is_file())
            {
                DataSplits {
                    train: load_dataset(&dir.join("train"))?,
                    query: load_dataset(&dir.join("query"))?,
                    test: load_dataset(&dir.join("test"))?,
                }
            } else {
                let full = generate(&spec)?;
                let (mut train, rest) = split(&full, TRAIN_FRACTION, spec.seed)?;
                train.role = crate::data::Role::Train;
                let (query, test) = split(&rest, QUERY_FRACTION, spec.seed.wrapping_add(1))?;
                let s = DataSplits { train, query, test };
                save_dataset(&s.train, &dir.join("train"))?;
                save_dataset(&s.query, &dir.join("query"))?;
                save_dataset(&s.test, &dir.join("test"))?;
                s
            }
        };
        match class_subset {
            None => Ok(all),
            Some(classes) => Ok(DataSplits {
                train: select_classes(&all.train, classes)?,
                query: select_classes(&all.query, classes)?,
                test: select_classes(&all.test, classes)?,
            }),
        }
    }

    /// Checks a reference against the catalog and the dataset registry.
    pub fn check_ref(&self, reference: &ModelRef) -> Result<()> {
        if catalog::family_of(&reference.architecture_id).is_none() {
            return Err(Error::NotFound {
                what: "architecture",
                id: reference.architecture_id.clone(),
            });
        }
        let spec = self.dataset_spec(&reference.dataset_id)?;
        reference.validate(spec.class_count)
    }

    /// Loads the referenced checkpoint, training and saving it first when
    /// absent.
    pub fn resolve(&self, reference: &ModelRef) -> Result<ResolvedModel> {
        self.resolve_inner(reference, false)
    }

    /// Trains the referenced model and overwrites any existing checkpoint.
    pub fn retrain(&self, reference: &ModelRef) -> Result<ResolvedModel> {
        self.resolve_inner(reference, true)
    }

    fn resolve_inner(&self, reference: &ModelRef, force: bool) -> Result<ResolvedModel> {
        self.check_ref(reference)?;
        let started = Instant::now();
        let models = self.models_dir();
        let lock = self.lock(&format!("model:{}", reference.key()));
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
        if !force && checkpoint::exists(reference, &models) {
            let model = checkpoint::load_checkpoint(reference, &models)?;
            return Ok(ResolvedModel {
                model,
                cache_hit: true,
                seconds: started.elapsed().as_secs_f64(),
                checkpoint: reference.dir(&models),
            });
        }
        let data = self.splits(&reference.dataset_id, reference.class_subset.as_deref())?;
        let width = data.train.class_count();
        let spec =
            catalog::architecture(&reference.architecture_id, data.train.sample_shape(), width)?;
        let mut model = Model::build(&spec, self.recipe.seed)?;
        log::info!("training {} on a cache miss", reference.key());
        nn::train(
            &mut model,
            &data.train.inputs,
            &Targets::Hard(data.train.labels.clone()),
            &self.recipe,
        )?;
        let path = checkpoint::save_checkpoint(&model, reference, &models)?;
        Ok(ResolvedModel {
            model,
            cache_hit: false,
            seconds: started.elapsed().as_secs_f64(),
            checkpoint: path,
        })
    }

    /// References of every checkpoint under the models directory.
    pub fn cached_models(&self) -> Result<Vec<checkpoint::CheckpointMeta>> {
        let dir = self.models_dir();
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let meta = entry.path().join("metadata.json");
            if !meta.is_file() {
                continue;
            }
            let raw = fs::read(&meta).map_err(|e| Error::io(&meta, e))?;
            if let Ok(m) = serde_json::from_slice(&raw) {
                out.push(m);
            }
        }
        out.sort_by(|a: &checkpoint::CheckpointMeta, b| {
            (&a.architecture_id, &a.dataset_id).cmp(&(&b.architecture_id, &b.dataset_id))
        });
        Ok(out)
    }
}
