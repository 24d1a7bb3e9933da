//! Extraction by querying: label the adversary's own samples with the
//! target's answers and train a fresh surrogate on them.

use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::attack::PredictionApi;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{self, LossKind, Model, Targets, TrainConfig};
use crate::rng;
use crate::tensor::{argmax, Tensor};
use crate::zoo::catalog;

const QUERY_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    #[default]
    ConfidenceVector,
    Top1Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnockoffConfig {
    pub query_budget: usize,
    #[serde(default)]
    pub output_mode: OutputMode,
    #[serde(default)]
    pub recreate: TrainConfig,
    /// Catalog id of the surrogate.
    pub surrogate_architecture: String,
}

/// Queried inputs with the target's responses.
#[derive(Debug, Clone, PartialEq)]
pub struct StolenDataset {
    pub inputs: Tensor,
    /// `[budget, classes]`: posteriors, or one-hot rows in label mode.
    pub outputs: Tensor,
    /// Row of each stolen sample in the query set, in query order.
    pub query_indices: Vec<usize>,
    pub mode: OutputMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub attack: String,
    pub query_budget: usize,
    pub queries_used: usize,
    pub output_mode: OutputMode,
    pub surrogate_architecture: String,
    pub epoch_losses: Vec<f64>,
    pub elapsed_seconds: f64,
}

/// Draws `budget` query rows without replacement and records the target's
/// answers to them.
pub fn build_stolen_dataset(
    target: &dyn PredictionApi,
    queries: &Dataset,
    budget: usize,
    mode: OutputMode,
    seed: u64,
) -> Result<StolenDataset> {
    if budget == 0 {
        return Err(Error::invalid("query budget must be at least 1"));
    }
    if budget > queries.len() {
        return Err(Error::invalid(format!(
            "query budget {budget} exceeds the {} available query samples",
            queries.len()
        )));
    }
    if queries.sample_shape() != target.input_shape() {
        return Err(Error::invalid(format!(
            "query samples {:?} do not fit the target input {:?}",
            queries.sample_shape(),
            target.input_shape()
        )));
    }
    let mut rng = rng::seeded(seed, rng::QUERY);
    let picks = index::sample(&mut rng, queries.len(), budget).into_vec();
    let inputs = queries.inputs.select_rows(&picks);
    let width = target.output_width();
    let mut out = Vec::with_capacity(budget * width);
    for batch in picks.chunks(QUERY_BATCH) {
        let posteriors = target.predict(&queries.inputs.select_rows(batch))?;
        for row in posteriors.rows() {
            match mode {
                OutputMode::ConfidenceVector => out.extend_from_slice(row),
                OutputMode::Top1Label => {
                    let top = argmax(row);
                    out.extend((0..width).map(|j| if j == top { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    Ok(StolenDataset {
        inputs,
        outputs: Tensor::from_matrix(budget, width, out)?,
        query_indices: picks,
        mode,
    })
}

/// Steals a copy of `target`. The surrogate is initialized from `seed` and
/// trained with soft targets (confidence mode) or hard labels (label mode).
pub fn knockoff_extract(
    target: &dyn PredictionApi,
    queries: &Dataset,
    config: &KnockoffConfig,
    seed: u64,
) -> Result<(Model, AttackRecord)> {
    let started = Instant::now();
    let spec = catalog::architecture(
        &config.surrogate_architecture,
        target.input_shape(),
        target.output_width(),
    )?;
    let stolen = build_stolen_dataset(
        target,
        queries,
        config.query_budget,
        config.output_mode,
        seed,
    )?;
    let mut model = Model::build(&spec, seed)?;
    let mut train = config.recreate.clone();
    train.seed = seed;
    let targets = match config.output_mode {
        OutputMode::ConfidenceVector => {
            train.loss = LossKind::SoftTargetKl;
            Targets::Soft(stolen.outputs)
        }
        OutputMode::Top1Label => {
            train.loss = LossKind::CrossEntropy;
            Targets::Hard(stolen.outputs.argmax_rows())
        }
    };
    let history = nn::train(&mut model, &stolen.inputs, &targets, &train)?;
    let record = AttackRecord {
        attack: "knockoff".into(),
        query_budget: config.query_budget,
        queries_used: stolen.query_indices.len(),
        output_mode: config.output_mode,
        surrogate_architecture: config.surrogate_architecture.clone(),
        epoch_losses: history.epoch_losses,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, record))
}
