//! Per-event operator labelling of kernel traces with windowed softmax
//! regression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::OperatorKind;
use crate::nn::{self, Model, Targets, TrainConfig};
use crate::sidechannel::trace::KernelTraceEvent;
use crate::tensor::Tensor;
use crate::zoo::catalog;

/// Operator classes the labeller can emit. Pooling is one class, reported as
/// MAXPOOL.
pub const DS_VOCABULARY: [OperatorKind; 7] = [
    OperatorKind::Conv,
    OperatorKind::Fc,
    OperatorKind::Relu,
    OperatorKind::Bn,
    OperatorKind::Maxpool,
    OperatorKind::Concat,
    OperatorKind::Add,
];

const METRICS: usize = 5;

/// Vocabulary class of an operator, `None` for out-of-vocabulary kinds.
pub fn vocabulary_class(kind: OperatorKind) -> Option<usize> {
    let k = if kind == OperatorKind::Avgpool {
        OperatorKind::Maxpool
    } else {
        kind
    };
    DS_VOCABULARY.iter().position(|&v| v == k)
}

/// Ground truth as the labeller can express it: average pooling is folded
/// into the pooling class.
pub fn canonical_sequence(seq: &[OperatorKind]) -> Vec<OperatorKind> {
    seq.iter()
        .map(|&k| {
            if k == OperatorKind::Avgpool {
                OperatorKind::Maxpool
            } else {
                k
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DsConfig {
    /// Neighbours on each side included in an event's features.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_train")]
    pub train: TrainConfig,
}

fn default_window() -> usize {
    1
}

fn default_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.2,
        batch_size: 10,
        epochs: 300,
        ..Default::default()
    }
}

impl Default for DsConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            train: default_train(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DsClassifier {
    pub window: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    model: Model,
}

fn raw_features(trace: &[KernelTraceEvent], window: usize) -> Vec<Vec<f64>> {
    let n = trace.len() as isize;
    let w = window as isize;
    (0..n)
        .map(|i| {
            let mut f = Vec::with_capacity(METRICS * (2 * window + 1));
            for off in -w..=w {
                let j = i + off;
                if j < 0 || j >= n {
                    f.extend([0.0; METRICS]);
                } else {
                    f.extend(
                        trace[j as usize]
                            .metrics()
                            .iter()
                            .map(|m| m.max(1e-12).ln()),
                    );
                }
            }
            f
        })
        .collect()
}

impl DsClassifier {
    /// Standardized feature rows of a trace.
    pub fn features(&self, trace: &[KernelTraceEvent]) -> Vec<Vec<f64>> {
        let mut rows = raw_features(trace, self.window);
        for r in &mut rows {
            for ((v, m), s) in r.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        rows
    }

    fn predict_classes(&self, trace: &[KernelTraceEvent]) -> Result<Vec<usize>> {
        if trace.is_empty() {
            return Ok(Vec::new());
        }
        let rows = self.features(trace);
        let d = rows[0].len();
        let x = Tensor::from_matrix(rows.len(), d, rows.concat())?;
        Ok(self.model.forward(&x)?.argmax_rows())
    }
}

/// Fits the labeller on `(trace, true operator sequence)` pairs. Events whose
/// true operator is outside [`DS_VOCABULARY`] still provide context to
/// their neighbours but are not training targets.
pub fn train_ds_model(
    corpus: &[(Vec<KernelTraceEvent>, Vec<OperatorKind>)],
    config: &DsConfig,
) -> Result<DsClassifier> {
    if corpus.is_empty() {
        return Err(Error::invalid("DS training corpus is empty"));
    }
    let dim = METRICS * (2 * config.window + 1);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (trace, truth) in corpus {
        if trace.len() != truth.len() {
            return Err(Error::invalid(format!(
                "trace of {} events paired with {} operators; training traces must be noise-free",
                trace.len(),
                truth.len()
            )));
        }
        for (f, &kind) in raw_features(trace, config.window).into_iter().zip(truth) {
            if let Some(c) = vocabulary_class(kind) {
                rows.push(f);
                labels.push(c);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::invalid(
            "DS training corpus has no in-vocabulary events",
        ));
    }
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..dim)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let std: Vec<f64> = (0..dim)
        .map(|j| {
            let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    for r in &mut rows {
        for ((v, m), s) in r.iter_mut().zip(&mean).zip(&std) {
            *v = (*v - m) / s;
        }
    }
    let x = Tensor::from_matrix(rows.len(), dim, rows.concat())?;
    let spec = catalog::architecture("linear", &[dim], DS_VOCABULARY.len())?;
    let mut model = Model::build(&spec, config.train.seed)?;
    nn::train(&mut model, &x, &Targets::Hard(labels), &config.train)?;
    Ok(DsClassifier {
        window: config.window,
        mean,
        std,
        model,
    })
}

/// One predicted operator per trace event.
pub fn ds_extract(
    trace: &[KernelTraceEvent],
    classifier: &DsClassifier,
) -> Result<Vec<OperatorKind>> {
    Ok(classifier
        .predict_classes(trace)?
        .into_iter()
        .map(|c| DS_VOCABULARY[c])
        .collect())
}
