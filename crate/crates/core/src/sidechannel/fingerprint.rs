//! PCA fingerprint space over symbol histograms with k-nearest-neighbour
//! architecture and family votes.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sidechannel::symbols::SymbolHistogram;

pub const COMPONENTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintPoint {
    pub coords: [f64; COMPONENTS],
    pub architecture: String,
    pub family: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintModel {
    pub mean: [f64; 8],
    /// Principal axes, descending eigenvalue.
    pub components: [[f64; 8]; COMPONENTS],
    /// Sample-covariance eigenvalues, descending (all eight).
    pub eigenvalues: Vec<f64>,
    pub points: Vec<FingerprintPoint>,
    pub k: usize,
}

impl FingerprintModel {
    pub fn project(&self, hist: &SymbolHistogram) -> [f64; COMPONENTS] {
        let v = hist.vector();
        self.components
            .map(|c| (0..8).map(|j| c[j] * (v[j] - self.mean[j])).sum())
    }

    /// Share of total variance captured by the retained components.
    pub fn explained_variance(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|l| l.max(0.0)).sum();
        self.eigenvalues[..COMPONENTS]
            .iter()
            .map(|l| l.max(0.0))
            .sum::<f64>()
            / total
    }
}

pub fn fit_fingerprint_space(corpus: &[SymbolHistogram], k: usize) -> Result<FingerprintModel> {
    if k == 0 || k > corpus.len() {
        return Err(Error::invalid(format!(
            "k = {k} outside [1, {}]",
            corpus.len()
        )));
    }
    let archs: BTreeSet<&str> = corpus
        .iter()
        .map(|h| h.true_architecture_id.as_str())
        .collect();
    if archs.len() < 2 {
        return Err(Error::invalid(
            "fingerprint corpus must span at least two architectures",
        ));
    }
    let n = corpus.len();
    let rows: Vec<[f64; 8]> = corpus.iter().map(SymbolHistogram::vector).collect();
    let mut mean = [0.0; 8];
    for r in &rows {
        for j in 0..8 {
            mean[j] += r[j] / n as f64;
        }
    }
    let x = DMatrix::from_fn(n, 8, |i, j| rows[i][j] - mean[j]);
    let cov = x.transpose() * &x / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if !(eigenvalues[0] > 0.0) {
        return Err(Error::Degenerate(
            "fingerprint corpus has zero variance".into(),
        ));
    }
    let mut components = [[0.0; 8]; COMPONENTS];
    for (c, &i) in components.iter_mut().zip(&order) {
        for j in 0..8 {
            c[j] = eig.eigenvectors[(j, i)];
        }
        let lead = (0..8)
            .max_by(|&a, &b| c[a].abs().total_cmp(&c[b].abs()).then(b.cmp(&a)))
            .expect("eight loadings");
        if c[lead] < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let mut model = FingerprintModel {
        mean,
        components,
        eigenvalues,
        points: Vec::with_capacity(n),
        k,
    };
    model.points = corpus
        .iter()
        .map(|h| FingerprintPoint {
            coords: model.project(h),
            architecture: h.true_architecture_id.clone(),
            family: h.true_family.clone(),
        })
        .collect();
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighbourVote {
    pub architecture: String,
    pub family: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrPrediction {
    pub architecture: String,
    pub family: String,
    /// The k nearest training points, nearest first.
    pub votes: Vec<NeighbourVote>,
}

/// Majority label among `votes` (nearest first); ties go to the tied label
/// whose member is nearest.
fn majority<'a>(labels: impl Iterator<Item = &'a str> + Clone) -> String {
    let mut tally: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels.clone() {
        *tally.entry(l).or_default() += 1;
    }
    let best = tally.values().copied().max().unwrap_or(0);
    labels
        .into_iter()
        .find(|l| tally[l] == best)
        .unwrap_or_default()
        .to_string()
}

pub fn dr_classify(hist: &SymbolHistogram, model: &FingerprintModel) -> DrPrediction {
    let q = model.project(hist);
    let mut ranked: Vec<(f64, usize)> = model
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d: f64 = p.coords.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum();
            (d.sqrt(), i)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(model.k);
    let votes: Vec<NeighbourVote> = ranked
        .iter()
        .map(|&(d, i)| NeighbourVote {
            architecture: model.points[i].architecture.clone(),
            family: model.points[i].family.clone(),
            distance: d,
        })
        .collect();
    DrPrediction {
        architecture: majority(votes.iter().map(|v| v.architecture.as_str())),
        family: majority(votes.iter().map(|v| v.family.as_str())),
        votes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub exact_accuracy: f64,
    pub family_accuracy: f64,
}

/// Leave-one-out accuracy, refitting the projection for every held-out
/// histogram.
pub fn leave_one_out(corpus: &[SymbolHistogram], k: usize) -> Result<LooReport> {
    if corpus.len() < 2 {
        return Err(Error::invalid(
            "leave-one-out needs at least two histograms",
        ));
    }
    let mut exact = 0;
    let mut family = 0;
    for i in 0..corpus.len() {
        let rest: Vec<SymbolHistogram> = corpus
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, h)| h.clone())
            .collect();
        let model = fit_fingerprint_space(&rest, k.min(rest.len()))?;
        let p = dr_classify(&corpus[i], &model);
        exact += usize::from(p.architecture == corpus[i].true_architecture_id);
        family += usize::from(p.family == corpus[i].true_family);
    }
    let n = corpus.len() as f64;
    Ok(LooReport {
        exact_accuracy: exact as f64 / n,
        family_accuracy: family as f64 / n,
    })
}
