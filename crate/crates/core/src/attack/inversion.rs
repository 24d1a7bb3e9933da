//! Gradient-ascent model inversion.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack::GradientOracle;
use crate::data::{save_dataset, Dataset, DatasetSpec, Role};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    AuxiliarySample,
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionConfig {
    pub target_class: usize,
    #[serde(default = "default_threshold")]
    pub posterior_threshold: f64,
    #[serde(default = "default_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_step")]
    pub step_size: f64,
    #[serde(default)]
    pub init_mode: InitMode,
    /// Value interval of the reconstruction. When absent, the value range of
    /// the auxiliary data, or [`FALLBACK_CLAMP`] without auxiliary data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp_range: Option<[f64; 2]>,
    /// Random initialization draws uniformly from the clamp range shrunk
    /// about its centre by this factor.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_threshold() -> f64 {
    0.9
}
fn default_iterations() -> usize {
    500
}
fn default_step() -> f64 {
    0.1
}
pub const FALLBACK_CLAMP: [f64; 2] = [-4.0, 4.0];
fn default_init_scale() -> f64 {
    0.1
}

impl InversionConfig {
    pub fn new(target_class: usize) -> Self {
        Self {
            target_class,
            posterior_threshold: default_threshold(),
            max_iterations: default_iterations(),
            step_size: default_step(),
            init_mode: InitMode::Random,
            clamp_range: None,
            init_scale: default_init_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.posterior_threshold;
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::invalid(format!(
                "posterior_threshold {g} outside (0, 1]"
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!(
                "step_size must be > 0, got {}",
                self.step_size
            )));
        }
        if let Some([lo, hi]) = self.clamp_range {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "clamp_range [{lo}, {hi}] is not an interval"
                )));
            }
        }
        if !(self.init_scale > 0.0 && self.init_scale <= 1.0) {
            return Err(Error::invalid(format!(
                "init_scale {} outside (0, 1]",
                self.init_scale
            )));
        }
        Ok(())
    }

    pub fn resolved_clamp(&self, aux: Option<&Dataset>) -> [f64; 2] {
        if let Some(r) = self.clamp_range {
            return r;
        }
        let Some(aux) = aux.filter(|d| !d.is_empty()) else {
            return FALLBACK_CLAMP;
        };
        let data = aux.inputs.data();
        let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi.is_finite() && lo < hi {
            [lo, hi]
        } else {
            FALLBACK_CLAMP
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    /// One sample, shaped like the model input.
    pub reconstruction: Tensor,
    /// Posterior at every evaluated point, starting with the initialization.
    pub posteriors: Vec<f64>,
    pub success: bool,
    /// Interval the reconstruction was clamped to.
    pub clamp_range: [f64; 2],
}

impl InversionResult {
    pub fn final_posterior(&self) -> f64 {
        *self
            .posteriors
            .last()
            .expect("trace holds the initial posterior")
    }
}

/// Repeats `x <- clamp(x + step * grad log p(class | x))` until the class
/// posterior reaches the threshold or the iteration cap is hit.
pub fn miface_invert(
    model: &dyn GradientOracle,
    config: &InversionConfig,
    aux: Option<&Dataset>,
    seed: u64,
) -> Result<InversionResult> {
    config.validate()?;
    if config.target_class >= model.output_width() {
        return Err(Error::invalid(format!(
            "target_class {} outside model output width {}",
            config.target_class,
            model.output_width()
        )));
    }
    let shape = model.input_shape().to_vec();
    let len: usize = shape.iter().product();
    let [lo, hi] = config.resolved_clamp(aux);
    let mut rng = rng::seeded(seed, rng::INVERSION);
    let init: Vec<f64> = match config.init_mode {
        InitMode::Random => {
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo) * config.init_scale;
            (0..len)
                .map(|_| rng.random_range(mid - half..mid + half))
                .collect()
        }
        InitMode::AuxiliarySample => {
            let aux = aux.ok_or_else(|| {
                Error::invalid("auxiliary_sample initialization needs an auxiliary dataset")
            })?;
            if aux.is_empty() || aux.sample_shape() != shape.as_slice() {
                return Err(Error::invalid(
                    "auxiliary dataset is empty or has the wrong sample shape",
                ));
            }
            let i = rng.random_range(0..aux.len());
            aux.sample(i).iter().map(|v| v.clamp(lo, hi)).collect()
        }
    };
    let mut x = Tensor::new(shape, init)?;
    let gamma = config.posterior_threshold;
    let (mut p, mut grad) = model.log_posterior_gradient(&x, config.target_class)?;
    let mut posteriors = vec![p];
    for _ in 0..config.max_iterations {
        if p >= gamma {
            break;
        }
        for (v, g) in x.data_mut().iter_mut().zip(grad.data()) {
            *v = (*v + config.step_size * g).clamp(lo, hi);
        }
        (p, grad) = model.log_posterior_gradient(&x, config.target_class)?;
        posteriors.push(p);
    }
    Ok(InversionResult {
        reconstruction: x,
        success: p >= gamma,
        posteriors,
        clamp_range: [lo, hi],
    })
}

/// Writes a reconstruction as a single-sample dataset cache and an 8-bit
/// greyscale PGM (channels averaged, min-max scaled). Returns both paths.
pub fn save_reconstruction(
    sample: &Tensor,
    class: usize,
    dir: &Path,
    name: &str,
) -> Result<Vec<PathBuf>> {
    let shape = sample.shape().to_vec();
    let cache_dir = dir.join(name);
    let ds = Dataset {
        spec: DatasetSpec {
            id: name.to_string(),
            class_count: (class + 1).max(2),
            samples_per_class: 1,
            input_shape: shape.clone(),
            overlap: 0.0,
            seed: 0,
        },
        role: Role::Full,
        inputs: sample.clone().reshape([vec![1], shape.clone()].concat())?,
        labels: vec![class],
        origin: vec![0],
        class_map: None,
    };
    save_dataset(&ds, &cache_dir)?;

    let (h, w, c) = match shape.as_slice() {
        [h, w, c] => (*h, *w, *c),
        [h, w] => (*h, *w, 1),
        _ => (1, sample.len(), 1),
    };
    let pixels: Vec<f64> = (0..h * w)
        .map(|p| sample.data()[p * c..(p + 1) * c].iter().sum::<f64>() / c as f64)
        .collect();
    let min = pixels.iter().copied().fold(f64::INFINITY, f64::min);
    let max = pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if max > min { max - min } else { 1.0 };
    let mut pgm = format!("P5\n{w} {h}\n255\n").into_bytes();
    pgm.extend(
        pixels
            .iter()
            .map(|v| (255.0 * (v - min) / span).round() as u8),
    );
    let pgm_path = dir.join(format!("{name}.pgm"));
    fs::write(&pgm_path, pgm).map_err(|e| Error::io(&pgm_path, e))?;
    Ok(vec![cache_dir, pgm_path])
}
