//! Knockoff extraction followed by inversion of the stolen model, swept over
//! query budgets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::inversion::{miface_invert, InversionConfig};
use crate::attack::knockoff::{knockoff_extract, KnockoffConfig, OutputMode};
use crate::attack::PredictionApi;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::rng;
use crate::similarity::{fidelity, pwcca_distance, DEFAULT_RIDGE};
use crate::tensor::{cosine_similarity, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagedStudyConfig {
    pub budgets: Vec<usize>,
    #[serde(default)]
    pub output_mode: OutputMode,
    #[serde(default)]
    pub recreate: TrainConfig,
    pub surrogate_architecture: String,
    pub inversion: InversionConfig,
}

impl StagedStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budgets.is_empty() {
            return Err(Error::invalid("budgets must not be empty"));
        }
        if self.budgets.contains(&0) {
            return Err(Error::invalid("budget 0 is not a valid query amount"));
        }
        if self.budgets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("budgets must be sorted ascending"));
        }
        self.inversion.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageResult {
    pub budget: usize,
    pub fidelity: f64,
    /// Distance between target and stolen posteriors on the test set.
    pub pwcca_distance: f64,
    pub reconstruction: Tensor,
    pub class_similarity: f64,
    pub success: bool,
    pub final_posterior: f64,
}

/// Runs one knockoff per budget and inverts each stolen model. The class
/// similarity is the cosine between the reconstruction and the test-set mean
/// of the inverted class.
pub fn staged_inversion_study(
    target: &dyn PredictionApi,
    queries: &Dataset,
    test: &Dataset,
    config: &StagedStudyConfig,
    seed: u64,
) -> Result<Vec<StageResult>> {
    config.validate()?;
    if let Some(&b) = config.budgets.iter().find(|&&b| b > queries.len()) {
        return Err(Error::invalid(format!(
            "budget {b} exceeds the {} available query samples",
            queries.len()
        )));
    }
    let class = config.inversion.target_class;
    let mean = test
        .class_mean(class)
        .ok_or_else(|| Error::invalid(format!("test set has no samples of class {class}")))?;
    let target_posteriors = target.predict(&test.inputs)?;
    let mut out = Vec::with_capacity(config.budgets.len());
    for &budget in &config.budgets {
        let ko = KnockoffConfig {
            query_budget: budget,
            output_mode: config.output_mode,
            recreate: config.recreate.clone(),
            surrogate_architecture: config.surrogate_architecture.clone(),
        };
        let (stolen, _) = knockoff_extract(target, queries, &ko, seed)?;
        let fid = fidelity(target, &stolen, test)?;
        let stolen_posteriors = stolen.predict(&test.inputs)?;
        let pwcca = pwcca_distance(&target_posteriors, &stolen_posteriors, DEFAULT_RIDGE)?;
        let inv = miface_invert(&stolen, &config.inversion, Some(queries), seed)?;
        out.push(StageResult {
            budget,
            fidelity: fid,
            pwcca_distance: pwcca,
            class_similarity: cosine_similarity(inv.reconstruction.data(), &mean),
            success: inv.success,
            final_posterior: inv.final_posterior(),
            reconstruction: inv.reconstruction,
        });
    }
    Ok(out)
}

/// Cosine similarities of `count` uniform random images in `[lo, hi]` to a
/// reference image.
pub fn random_similarity_baseline(
    reference: &[f64],
    range: [f64; 2],
    count: usize,
    seed: u64,
) -> Vec<f64> {
    let mut rng = rng::seeded(seed, rng::BASELINE);
    (0..count)
        .map(|_| {
            let img: Vec<f64> = (0..reference.len())
                .map(|_| rng.random_range(range[0]..range[1]))
                .collect();
            cosine_similarity(&img, reference)
        })
        .collect()
}
