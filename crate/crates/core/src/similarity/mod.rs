//! Agreement and representation-similarity measurements between models.

pub mod distill;
pub mod noise;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::attack::PredictionApi;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::Tensor;

pub use distill::{distill, equivalency_report, DistillConfig, EquivalencyReport};
pub use noise::{layer_noise_sensitivity, LayerCurve, NoiseSensitivity};

pub const DEFAULT_RIDGE: f64 = 1e-10;

/// A pair of node ids compared across two models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbePair {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub fidelity: f64,
    /// One distance per entry of `probe_points`.
    pub pwcca_distance: Vec<f64>,
    pub probe_points: Vec<ProbePair>,
    pub accuracy_target: f64,
    pub accuracy_stolen: f64,
}

/// Fraction of `test` on which both models give the same top-1 class.
pub fn fidelity(a: &dyn PredictionApi, b: &dyn PredictionApi, test: &Dataset) -> Result<f64> {
    if a.output_width() != b.output_width() {
        return Err(Error::invalid(format!(
            "output widths differ: {} vs {}",
            a.output_width(),
            b.output_width()
        )));
    }
    if test.is_empty() {
        return Err(Error::invalid("fidelity over an empty test set"));
    }
    let pa = a.predict(&test.inputs)?.argmax_rows();
    let pb = b.predict(&test.inputs)?.argmax_rows();
    Ok(pa.iter().zip(&pb).filter(|(x, y)| x == y).count() as f64 / test.len() as f64)
}

/// Flattened activations of node `probe` for every test input, one row per
/// sample.
pub fn collect_activations(model: &Model, probe: &str, inputs: &Dataset) -> Result<Tensor> {
    let node = model
        .spec()
        .node_index(probe)
        .ok_or_else(|| Error::NotFound {
            what: "probe point",
            id: probe.to_string(),
        })?;
    let act = model.activation(&inputs.inputs, node)?;
    let (n, d) = (act.batch(), act.row_len());
    Tensor::from_matrix(n, d, act.into_data())
}

/// The representation feeding the final FC layer (the penultimate hidden
/// activation), or the model input when the head reads it directly.
pub fn penultimate_probe(model: &Model) -> Option<String> {
    let spec = model.spec();
    let head = model.logits_node()?;
    let src = spec.nodes[head].inputs.first()?;
    spec.node_index(src).map(|_| src.clone())
}

fn as_matrix(t: &Tensor) -> Result<DMatrix<f64>> {
    if t.shape().len() != 2 {
        return Err(Error::invalid(format!(
            "expected an n x d matrix, got shape {:?}",
            t.shape()
        )));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("activation matrix".into()));
    }
    let (n, d) = (t.shape()[0], t.shape()[1]);
    let mut m = DMatrix::from_row_slice(n, d, t.data());
    for mut col in m.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    Ok(m)
}

fn inverse_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(cov.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Degenerate(
            "covariance is singular even after the ridge".into(),
        ));
    }
    let inv = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * inv * eig.eigenvectors.transpose())
}

/// Projection-weighted CCA distance between two activation matrices over the
/// same `n` inputs.
pub fn pwcca_distance(acts_a: &Tensor, acts_b: &Tensor, ridge: f64) -> Result<f64> {
    let a = as_matrix(acts_a)?;
    let b = as_matrix(acts_b)?;
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::invalid(format!(
            "row counts differ: {n} vs {}",
            b.nrows()
        )));
    }
    if n <= a.ncols().max(b.ncols()) {
        return Err(Error::invalid(format!(
            "need more samples than dimensions: n = {n}, d = ({}, {})",
            a.ncols(),
            b.ncols()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::invalid("ridge must be non-negative"));
    }
    let scale = 1.0 / (n - 1) as f64;
    let ridged = |m: DMatrix<f64>| {
        let d = m.nrows();
        m + DMatrix::<f64>::identity(d, d) * ridge
    };
    let saa = ridged(a.transpose() * &a * scale);
    let sbb = ridged(b.transpose() * &b * scale);
    let sab = a.transpose() * &b * scale;
    let wa = inverse_sqrt(&saa)?;
    let wb = inverse_sqrt(&sbb)?;
    let svd = (&wa * sab * wb).svd(true, false);
    let u = svd.u.expect("requested U");
    let rho: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    // Canonical variates of view A, one column per correlation.
    let h = &a * &wa * u.columns(0, rho.len());
    let alpha: Vec<f64> = (0..rho.len())
        .map(|i| (h.column(i).transpose() * &a).iter().map(|v| v.abs()).sum())
        .collect();
    let total: f64 = alpha.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("view A has no variance".into()));
    }
    let weighted: f64 = alpha.iter().zip(&rho).map(|(w, r)| w / total * r).sum();
    Ok((1.0 - weighted).max(0.0))
}
