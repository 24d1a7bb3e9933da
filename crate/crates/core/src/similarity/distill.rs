//! Knowledge distillation and the distilled-model equivalency comparison.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::ops::softmax_in_place;
use crate::nn::train::{fit, Objective};
use crate::nn::{accuracy, Model, TrainConfig, TrainHistory};
use crate::similarity::{
    collect_activations, fidelity, pwcca_distance, ProbePair, SimilarityReport, DEFAULT_RIDGE,
};
use crate::tensor::Tensor;
use crate::zoo::catalog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    /// Catalog id of the student, instantiated for the teacher's shapes.
    #[serde(default = "default_student")]
    pub student_architecture: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_alpha")]
    pub hard_label_weight: f64,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_student() -> String {
    "student-cnn5".into()
}
fn default_temperature() -> f64 {
    4.0
}
fn default_alpha() -> f64 {
    0.1
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            student_architecture: default_student(),
            temperature: default_temperature(),
            hard_label_weight: default_alpha(),
            train: TrainConfig::default(),
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.hard_label_weight) {
            return Err(Error::invalid(format!(
                "hard_label_weight {} outside [0, 1]",
                self.hard_label_weight
            )));
        }
        self.train.validate()
    }
}

struct DistillObjective<'a> {
    /// `softmax(teacher_logits / tau)` per transfer sample.
    soft: Tensor,
    labels: &'a [usize],
    tau: f64,
    alpha: f64,
}

impl Objective for DistillObjective<'_> {
    fn evaluate(&self, logits: &Tensor, batch: &[usize]) -> (f64, Tensor) {
        let (a, tau) = (self.alpha, self.tau);
        let mut grad = logits.clone();
        let mut total = 0.0;
        for (r, &i) in batch.iter().enumerate() {
            let z = logits.row(r).to_vec();
            let g = grad.row_mut(r);
            softmax_in_place(g);
            let y = self.labels[i];
            let ce = -g[y].max(f64::MIN_POSITIVE).ln();
            g[y] -= 1.0;
            if a == 1.0 {
                total += ce;
                continue;
            }
            let mut ps: Vec<f64> = z.iter().map(|v| v / tau).collect();
            softmax_in_place(&mut ps);
            let pt = self.soft.row(i);
            let kl: f64 = pt
                .iter()
                .zip(&ps)
                .filter(|(t, _)| **t > 0.0)
                .map(|(t, s)| t * (t.ln() - s.max(f64::MIN_POSITIVE).ln()))
                .sum();
            total += a * ce + (1.0 - a) * tau * tau * kl;
            for ((gj, s), t) in g.iter_mut().zip(&ps).zip(pt) {
                *gj = a * *gj + (1.0 - a) * tau * (s - t);
            }
        }
        (total, grad)
    }
}

/// Trains `student` in place against `teacher` on the transfer set with
/// `alpha * CE(labels) + (1 - alpha) * tau^2 * KL(teacher_tau || student_tau)`.
pub fn distill_into(
    teacher: &Model,
    student: &mut Model,
    config: &DistillConfig,
    transfer: &Dataset,
) -> Result<TrainHistory> {
    config.validate()?;
    if teacher.output_width() != student.output_width() {
        return Err(Error::invalid(format!(
            "teacher width {} does not match student width {}",
            teacher.output_width(),
            student.output_width()
        )));
    }
    if let Some(bad) = transfer
        .labels
        .iter()
        .find(|&&l| l >= student.output_width())
    {
        return Err(Error::invalid(format!(
            "transfer label {bad} outside the student head"
        )));
    }
    let mut soft = teacher.logits(&transfer.inputs)?;
    let (n, k) = (soft.batch(), soft.row_len());
    soft = soft.reshape(vec![n, k])?;
    for i in 0..n {
        let row = soft.row_mut(i);
        row.iter_mut().for_each(|v| *v /= config.temperature);
        softmax_in_place(row);
    }
    let objective = DistillObjective {
        soft,
        labels: &transfer.labels,
        tau: config.temperature,
        alpha: config.hard_label_weight,
    };
    fit(
        student,
        &transfer.inputs,
        transfer.len(),
        &objective,
        &config.train,
    )
}

/// Builds the configured student for the teacher's shapes (initialized from
/// `config.train.seed`) and distills into it.
pub fn distill(
    teacher: &Model,
    config: &DistillConfig,
    transfer: &Dataset,
) -> Result<(Model, TrainHistory)> {
    config.validate()?;
    let spec = catalog::architecture(
        &config.student_architecture,
        teacher.input_shape(),
        teacher.output_width(),
    )?;
    let mut student = Model::build(&spec, config.train.seed)?;
    let history = distill_into(teacher, &mut student, config, transfer)?;
    Ok((student, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalencyReport {
    pub similarity: SimilarityReport,
    /// Distance between the two distilled students at `distilled_probe`.
    pub distilled_pwcca: f64,
    /// Distance between two students distilled from the target alone, with
    /// different seeds.
    pub baseline_pwcca: f64,
    pub distilled_probe: String,
    pub accuracy_distilled_target: f64,
    pub accuracy_distilled_stolen: f64,
    pub distill_config: DistillConfig,
}

fn default_probe(model: &Model) -> Result<String> {
    if let Some(p) = crate::similarity::penultimate_probe(model) {
        return Ok(p);
    }
    let node = model
        .logits_node()
        .ok_or_else(|| Error::invalid(format!("'{}' has no probe point", model.spec().id)))?;
    Ok(model.spec().nodes[node].id.clone())
}

/// Compares target and stolen models directly and after distilling both into
/// the same student (same seed). `probes` defaults to each model's
/// penultimate representation.
pub fn equivalency_report(
    target: &Model,
    stolen: &Model,
    transfer: &Dataset,
    test: &Dataset,
    config: &DistillConfig,
    probes: Option<&[ProbePair]>,
) -> Result<EquivalencyReport> {
    config.validate()?;
    let fid = fidelity(target, stolen, test)?;
    let probes: Vec<ProbePair> = match probes {
        Some(p) if !p.is_empty() => p.to_vec(),
        _ => vec![ProbePair {
            a: default_probe(target)?,
            b: default_probe(stolen)?,
        }],
    };
    let mut distances = Vec::with_capacity(probes.len());
    for p in &probes {
        let a = collect_activations(target, &p.a, test)?;
        let b = collect_activations(stolen, &p.b, test)?;
        distances.push(pwcca_distance(&a, &b, DEFAULT_RIDGE)?);
    }
    let (student_t, _) = distill(target, config, transfer)?;
    let (student_s, _) = distill(stolen, config, transfer)?;
    let mut reseeded = config.clone();
    reseeded.train.seed = config.train.seed.wrapping_add(1);
    let (student_b, _) = distill(target, &reseeded, transfer)?;
    let probe = default_probe(&student_t)?;
    let at = collect_activations(&student_t, &probe, test)?;
    let distilled_pwcca = pwcca_distance(
        &at,
        &collect_activations(&student_s, &probe, test)?,
        DEFAULT_RIDGE,
    )?;
    let baseline_pwcca = pwcca_distance(
        &at,
        &collect_activations(&student_b, &probe, test)?,
        DEFAULT_RIDGE,
    )?;
    Ok(EquivalencyReport {
        similarity: SimilarityReport {
            fidelity: fid,
            pwcca_distance: distances,
            probe_points: probes,
            accuracy_target: accuracy(target, &test.inputs, &test.labels)?,
            accuracy_stolen: accuracy(stolen, &test.inputs, &test.labels)?,
        },
        distilled_pwcca,
        baseline_pwcca,
        distilled_probe: probe,
        accuracy_distilled_target: accuracy(&student_t, &test.inputs, &test.labels)?,
        accuracy_distilled_stolen: accuracy(&student_s, &test.inputs, &test.labels)?,
        distill_config: config.clone(),
    })
}
