//! Query-based extraction and model inversion.

pub mod inversion;
pub mod knockoff;
pub mod staged;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::Model;
use crate::tensor::Tensor;

pub use inversion::{
    miface_invert, save_reconstruction, InitMode, InversionConfig, InversionResult, FALLBACK_CLAMP,
};
pub use knockoff::{
    build_stolen_dataset, knockoff_extract, AttackRecord, KnockoffConfig, OutputMode, StolenDataset,
};
pub use staged::{
    random_similarity_baseline, staged_inversion_study, StageResult, StagedStudyConfig,
};

/// An opaque prediction endpoint. Implementors expose posteriors and nothing
/// else about the model behind them.
pub trait PredictionApi: Send + Sync {
    fn input_shape(&self) -> &[usize];
    fn output_width(&self) -> usize;
    /// Class posteriors for a batch `[N, ...input_shape]`.
    fn predict(&self, inputs: &Tensor) -> Result<Tensor>;
}

impl PredictionApi for Model {
    fn input_shape(&self) -> &[usize] {
        Model::input_shape(self)
    }

    fn output_width(&self) -> usize {
        Model::output_width(self)
    }

    fn predict(&self, inputs: &Tensor) -> Result<Tensor> {
        Model::predict(self, inputs)
    }
}

/// Wraps a model behind [`PredictionApi`] and counts the samples queried.
pub struct BlackBox<'a> {
    model: &'a Model,
    queries: AtomicUsize,
}

impl<'a> BlackBox<'a> {
    pub fn new(model: &'a Model) -> Self {
        Self {
            model,
            queries: AtomicUsize::new(0),
        }
    }

    pub fn queries_used(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }
}

impl PredictionApi for BlackBox<'_> {
    fn input_shape(&self) -> &[usize] {
        self.model.input_shape()
    }

    fn output_width(&self) -> usize {
        self.model.output_width()
    }

    fn predict(&self, inputs: &Tensor) -> Result<Tensor> {
        self.queries.fetch_add(inputs.batch(), Ordering::Relaxed);
        self.model.predict(inputs)
    }
}

/// Input-gradient access to a classifier, as needed for inversion.
pub trait GradientOracle {
    fn input_shape(&self) -> &[usize];
    fn output_width(&self) -> usize;
    /// `(p(class | x), d log p(class | x) / dx)` for one sample.
    fn log_posterior_gradient(&self, sample: &Tensor, class: usize) -> Result<(f64, Tensor)>;
}

impl GradientOracle for Model {
    fn input_shape(&self) -> &[usize] {
        Model::input_shape(self)
    }

    fn output_width(&self) -> usize {
        Model::output_width(self)
    }

    fn log_posterior_gradient(&self, sample: &Tensor, class: usize) -> Result<(f64, Tensor)> {
        Model::log_posterior_gradient(self, sample, class)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKnowledge {
    Observed,
    Hidden,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKnowledge {
    Partial,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxDataset {
    Partial,
    None,
}

/// Adversary knowledge triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThreatModel {
    pub model_knowledge: ModelKnowledge,
    pub system_knowledge: SystemKnowledge,
    pub aux_dataset: AuxDataset,
}

impl ThreatModel {
    pub const fn new(m: ModelKnowledge, s: SystemKnowledge, d: AuxDataset) -> Self {
        Self {
            model_knowledge: m,
            system_knowledge: s,
            aux_dataset: d,
        }
    }

    /// Requirements of `required` that these grants do not cover. Model
    /// knowledge kinds are unordered and must match; a required `none`
    /// is covered by any grant.
    pub fn violations_against(&self, required: &ThreatModel) -> Vec<String> {
        let mut out = Vec::new();
        if self.model_knowledge != required.model_knowledge {
            out.push(
                format!(
                    "requires {:?} model knowledge, granted {:?}",
                    required.model_knowledge, self.model_knowledge
                )
                .to_lowercase(),
            );
        }
        if required.system_knowledge == SystemKnowledge::Partial
            && self.system_knowledge != SystemKnowledge::Partial
        {
            out.push("requires partial system knowledge, granted none".into());
        }
        if required.aux_dataset == AuxDataset::Partial && self.aux_dataset != AuxDataset::Partial {
            out.push("requires a partial auxiliary dataset, granted none".into());
        }
        out
    }
}

impl std::fmt::Display for ThreatModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let m = match self.model_knowledge {
            ModelKnowledge::Observed => "M_o",
            ModelKnowledge::Hidden => "M_h",
        };
        let s = match self.system_knowledge {
            SystemKnowledge::Partial => "S_p",
            SystemKnowledge::None => "S_n",
        };
        let d = match self.aux_dataset {
            AuxDataset::Partial => "D_p",
            AuxDataset::None => "D_n",
        };
        write!(f, "({m}, {s}, {d})")
    }
}
