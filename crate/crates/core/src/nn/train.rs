//! Mini-batch SGD over a model's pre-softmax outputs.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::Model;
use crate::nn::ops::softmax_in_place;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
    SoftTargetKl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub loss: LossKind,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    0.01
}
fn default_batch() -> usize {
    10
}
fn default_epochs() -> usize {
    20
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            loss: LossKind::CrossEntropy,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Supervision for each sample: class indices or probability vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Hard(Vec<usize>),
    Soft(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Hard(v) => v.len(),
            Targets::Soft(t) => t.batch(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, width: usize) -> Result<()> {
        match self {
            Targets::Hard(v) => {
                if let Some(bad) = v.iter().find(|&&l| l >= width) {
                    return Err(Error::invalid(format!(
                        "label {bad} outside model output width {width}"
                    )));
                }
            }
            Targets::Soft(t) => {
                if t.row_len() != width {
                    return Err(Error::invalid(format!(
                        "target vectors of width {} do not match model output width {width}",
                        t.row_len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Probability vector for sample `i`.
    fn distribution(&self, i: usize, width: usize) -> Vec<f64> {
        match self {
            Targets::Hard(v) => {
                let mut d = vec![0.0; width];
                d[v[i]] = 1.0;
                d
            }
            Targets::Soft(t) => t.row(i).to_vec(),
        }
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epoch_losses: Vec<f64>,
}

/// Loss over a batch of logits, returning `(sum of per-sample losses,
/// d(sum)/d logits)`.
pub(crate) trait Objective {
    fn evaluate(&self, logits: &Tensor, batch: &[usize]) -> (f64, Tensor);
}

struct TargetObjective<'a> {
    targets: &'a Targets,
    loss: LossKind,
}

impl Objective for TargetObjective<'_> {
    fn evaluate(&self, logits: &Tensor, batch: &[usize]) -> (f64, Tensor) {
        let k = logits.row_len();
        let mut grad = logits.clone();
        let mut total = 0.0;
        for (r, &i) in batch.iter().enumerate() {
            let y = self.targets.distribution(i, k);
            let p = grad.row_mut(r);
            softmax_in_place(p);
            for (pj, yj) in p.iter_mut().zip(&y) {
                if *yj > 0.0 {
                    let logp = pj.max(f64::MIN_POSITIVE).ln();
                    total += match self.loss {
                        LossKind::CrossEntropy => -yj * logp,
                        LossKind::SoftTargetKl => yj * (yj.ln() - logp),
                    };
                }
                *pj -= yj;
            }
        }
        (total, grad)
    }
}

/// Trains `model` in place with plain mini-batch SGD.
pub fn train(
    model: &mut Model,
    inputs: &Tensor,
    targets: &Targets,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    targets.check(model.output_width())?;
    let objective = TargetObjective {
        targets,
        loss: config.loss,
    };
    fit(model, inputs, targets.len(), &objective, config)
}

pub(crate) fn fit(
    model: &mut Model,
    inputs: &Tensor,
    count: usize,
    objective: &dyn Objective,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if count == 0 || inputs.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if inputs.batch() != count {
        return Err(Error::invalid(format!(
            "{} inputs but {count} targets",
            inputs.batch()
        )));
    }
    if config.epochs == 0 {
        return Ok(TrainHistory::default());
    }
    if model.has_batch_norm() && !model.info().bn_calibrated {
        let n = count.min(256);
        let idx: Vec<usize> = (0..n).collect();
        model.calibrate_batch_norm(&inputs.select_rows(&idx))?;
    }
    let trainable: Vec<Vec<bool>> = model
        .topology()
        .params
        .iter()
        .map(|d| d.iter().map(|p| p.trainable).collect())
        .collect();
    let logits_node = model.logits_node();
    let mut rng = rng::seeded(config.seed, rng::SHUFFLE);
    let mut order: Vec<usize> = (0..count).collect();
    let mut history = TrainHistory::default();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let x = inputs.select_rows(batch);
            model.forward_cached(&x)?;
            let logits = match logits_node {
                Some(n) => model.cached_activation(n)?.clone(),
                None => x.clone(),
            };
            let (loss, mut dlogits) = objective.evaluate(&logits, batch);
            epoch_loss += loss;
            let scale = 1.0 / batch.len() as f64;
            dlogits.data_mut().iter_mut().for_each(|g| *g *= scale);
            let grads = model.backward_from(logits_node, &dlogits)?;
            let lr = config.learning_rate;
            for ((node, gnode), flags) in model
                .params_mut()
                .iter_mut()
                .zip(&grads.params)
                .zip(&trainable)
            {
                for ((p, g), &t) in node.iter_mut().zip(gnode).zip(flags) {
                    if !t {
                        continue;
                    }
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= lr * gv;
                    }
                }
            }
        }
        let mean = epoch_loss / count as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        history.epoch_losses.push(mean);
    }
    model.info_mut().epochs_trained += config.epochs;
    Ok(history)
}

/// Top-1 accuracy of `model` on labeled inputs.
pub fn accuracy(model: &Model, inputs: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let pred = model.forward(inputs)?.argmax_rows();
    let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / labels.len() as f64)
}
