//! Accuracy under Gaussian perturbation of one layer's weights at a time.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{accuracy, Model};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCurve {
    pub node_id: String,
    /// Mean accuracy per magnitude.
    pub mean_accuracy: Vec<f64>,
    /// Per magnitude, the accuracy of every trial.
    pub trial_accuracy: Vec<Vec<f64>>,
    /// Trapezoid area under the mean-accuracy curve.
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSensitivity {
    pub magnitudes: Vec<f64>,
    pub trials: usize,
    pub baseline_accuracy: f64,
    /// Weight layers in execution order.
    pub layers: Vec<LayerCurve>,
}

impl NoiseSensitivity {
    /// `layer,magnitude,mean_accuracy,trials` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,magnitude,mean_accuracy,trials\n");
        for l in &self.layers {
            for (m, a) in self.magnitudes.iter().zip(&l.mean_accuracy) {
                s.push_str(&format!("{},{},{},{}\n", l.node_id, m, a, self.trials));
            }
        }
        s
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum()
}

/// Perturbs the weight tensor of each CONV/FC layer in turn with noise of
/// standard deviation `m * std(weights)` and records test accuracy. Weights
/// are restored bit-exactly after every trial.
pub fn layer_noise_sensitivity(
    model: &mut Model,
    test: &Dataset,
    magnitudes: &[f64],
    trials: usize,
    seed: u64,
) -> Result<NoiseSensitivity> {
    if magnitudes.first() != Some(&0.0) {
        return Err(Error::invalid("magnitudes must start at 0"));
    }
    if magnitudes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("magnitudes must be strictly ascending"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let baseline = accuracy(model, &test.inputs, &test.labels)?;
    let mut rng = rng::seeded(seed, rng::NOISE);
    let mut layers = Vec::new();
    for node in model.weight_layers() {
        let original = model.params()[node][0].clone();
        let sigma = std_dev(original.data());
        let mut trial_accuracy = Vec::with_capacity(magnitudes.len());
        for &m in magnitudes {
            if m == 0.0 {
                trial_accuracy.push(vec![baseline; trials]);
                continue;
            }
            let mut accs = Vec::with_capacity(trials);
            for _ in 0..trials {
                {
                    let w = &mut model.params_mut()[node][0];
                    for v in w.data_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *v += m * sigma * z;
                    }
                }
                let acc = accuracy(model, &test.inputs, &test.labels);
                model.params_mut()[node][0] = original.clone();
                accs.push(acc?);
            }
            trial_accuracy.push(accs);
        }
        let mean_accuracy: Vec<f64> = trial_accuracy
            .iter()
            .map(|t| t.iter().sum::<f64>() / t.len() as f64)
            .collect();
        layers.push(LayerCurve {
            node_id: model.spec().nodes[node].id.clone(),
            auc: trapezoid(magnitudes, &mean_accuracy),
            mean_accuracy,
            trial_accuracy,
        });
    }
    Ok(NoiseSensitivity {
        magnitudes: magnitudes.to_vec(),
        trials,
        baseline_accuracy: baseline,
        layers,
    })
}
