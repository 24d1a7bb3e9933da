//! Cumulative spectral gradient: a class-separability score computed from
//! the spectrum of a Monte-Carlo class-overlap graph.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_MONTE_CARLO_SAMPLES: usize = 100;
pub const DEFAULT_K_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub csg: f64,
    /// Laplacian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Row-stochastic `K x K` class-overlap estimate.
    pub overlap_matrix: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Labels of the `k` nearest neighbours of sample `i` (itself excluded).
fn neighbour_labels(ds: &Dataset, i: usize, k: usize) -> Vec<usize> {
    let x = ds.sample(i);
    let mut d: Vec<(f64, usize)> = (0..ds.len())
        .filter(|&j| j != i)
        .map(|j| (sq_dist(x, ds.sample(j)), j))
        .collect();
    d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d[..k].iter().map(|&(_, j)| ds.labels[j]).collect()
}

/// Spectral summary of an overlap matrix: symmetric normalized Laplacian of
/// `(W + Wᵀ)/2`, its ascending eigenvalues, and the class-count-scaled sum of
/// positive consecutive eigen-gaps.
pub fn spectral_summary(overlap: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let k = overlap.len();
    let s = DMatrix::from_fn(k, k, |i, j| 0.5 * (overlap[i][j] + overlap[j][i]));
    let deg: Vec<f64> = (0..k).map(|i| s.row(i).sum()).collect();
    if deg.iter().any(|&d| d <= 0.0) {
        return Err(Error::Degenerate("class with zero overlap degree".into()));
    }
    let lap = DMatrix::from_fn(k, k, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - s[(i, j)] / (deg[i] * deg[j]).sqrt()
    });
    let mut eig: Vec<f64> = lap.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let gaps: f64 = eig.windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum();
    Ok((k as f64 * gaps, eig))
}

/// Monte-Carlo CSG. For each class, up to `monte_carlo_samples` of its
/// points are drawn without replacement; each contributes the class
/// composition of its `k_neighbors` nearest neighbours in the pooled data.
pub fn csg_complexity(
    dataset: &Dataset,
    monte_carlo_samples: usize,
    k_neighbors: usize,
    seed: u64,
) -> Result<ComplexityReport> {
    if monte_carlo_samples == 0 || k_neighbors == 0 {
        return Err(Error::invalid(
            "monte_carlo_samples and k_neighbors must be positive",
        ));
    }
    let classes = dataset.class_count();
    let by_class = dataset.indices_by_class();
    for c in 0..classes {
        let n = by_class.get(&c).map_or(0, Vec::len);
        if n < k_neighbors {
            return Err(Error::invalid(format!(
                "class {c} has {n} samples, fewer than k_neighbors = {k_neighbors}"
            )));
        }
    }
    if dataset.len() <= k_neighbors {
        return Err(Error::invalid("dataset too small for the neighbour count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut overlap = vec![vec![0.0; classes]; classes];
    for (c, row) in overlap.iter_mut().enumerate() {
        let members = &by_class[&c];
        let m = monte_carlo_samples.min(members.len());
        let picks = index::sample(&mut rng, members.len(), m);
        for p in picks.iter() {
            for l in neighbour_labels(dataset, members[p], k_neighbors) {
                row[l] += 1.0;
            }
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    let (csg, eigenvalues) = spectral_summary(&overlap)?;
    Ok(ComplexityReport {
        csg,
        eigenvalues,
        overlap_matrix: overlap,
    })
}
