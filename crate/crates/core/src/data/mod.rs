//! Synthetic labeled image datasets, partitioning, chunked loading and the
//! CSG complexity score.
//!
//! Class `c` is a Gaussian cloud (unit variance per pixel) around a prototype
//! image. Prototypes are orthonormal directions scaled to
//! [`PROTOTYPE_RADIUS`]; the `overlap` knob pulls every prototype toward the
//! common mean, so `overlap = 1` makes all classes share one distribution.

pub mod cache;
pub mod csg;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use cache::{load_dataset, save_dataset, CacheChunks};
pub use csg::{csg_complexity, ComplexityReport};

pub const PROTOTYPE_RADIUS: f64 = 4.5;
pub const NOISE_STD: f64 = 1.0;
/// Intensity shared by every prototype pixel.
pub const BACKGROUND: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub id: String,
    pub class_count: usize,
    pub samples_per_class: usize,
    pub input_shape: Vec<usize>,
    pub overlap: f64,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::invalid("class_count must be at least 2"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::invalid("samples_per_class must be positive"));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::invalid(format!(
                "bad input shape {:?}",
                self.input_shape
            )));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::invalid(format!(
                "overlap {} outside [0, 1]",
                self.overlap
            )));
        }
        Ok(())
    }

    pub fn sample_len(&self) -> usize {
        self.input_shape.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Full,
    Query,
    Test,
    Train,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub role: Role,
    /// `[N, ...input_shape]`.
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    /// Index of each sample in the originally generated dataset.
    pub origin: Vec<usize>,
    /// `class_map[new_label] = original label`, when labels were re-indexed.
    pub class_map: Option<Vec<usize>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_map
            .as_ref()
            .map_or(self.spec.class_count, Vec::len)
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    /// New dataset holding the given rows (labels unchanged).
    pub fn select(&self, indices: &[usize], role: Role) -> Dataset {
        Dataset {
            spec: self.spec.clone(),
            role,
            inputs: self.inputs.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            origin: indices.iter().map(|&i| self.origin[i]).collect(),
            class_map: self.class_map.clone(),
        }
    }

    pub fn indices_by_class(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            m.entry(l).or_default().push(i);
        }
        m
    }

    /// Mean image of one class.
    pub fn class_mean(&self, class: usize) -> Option<Vec<f64>> {
        let idx = self.indices_by_class().remove(&class)?;
        let w = self.inputs.row_len();
        let mut mean = vec![0.0; w];
        for &i in &idx {
            for (m, v) in mean.iter_mut().zip(self.sample(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
        Some(mean)
    }

    /// Iterates the dataset in stable order, `chunk_size` samples at a time,
    /// stopping after `limit` samples when given.
    pub fn chunked_iter(&self, chunk_size: usize, limit: Option<usize>) -> Result<Chunks<'_>> {
        if chunk_size == 0 {
            return Err(Error::invalid("chunk_size must be at least 1"));
        }
        let end = limit.map_or(self.len(), |l| l.min(self.len()));
        Ok(Chunks {
            dataset: self,
            pos: 0,
            end,
            chunk_size,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub start: usize,
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

/// Lazily materializes one chunk per `next` call.
pub struct Chunks<'a> {
    dataset: &'a Dataset,
    pos: usize,
    end: usize,
    chunk_size: usize,
}

impl Iterator for Chunks<'_> {
    type Item = Chunk;

    fn next(&mut self) -> Option<Chunk> {
        if self.pos >= self.end {
            return None;
        }
        let stop = (self.pos + self.chunk_size).min(self.end);
        let idx: Vec<usize> = (self.pos..stop).collect();
        let chunk = Chunk {
            start: self.pos,
            inputs: self.dataset.inputs.select_rows(&idx),
            labels: self.dataset.labels[self.pos..stop].to_vec(),
        };
        self.pos = stop;
        Some(chunk)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.pos).div_ceil(self.chunk_size);
        (n, Some(n))
    }
}

/// Prototype image of every class after applying the overlap knob.
pub fn class_prototypes(spec: &DatasetSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let d = spec.sample_len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut protos: Vec<Vec<f64>> = Vec::with_capacity(spec.class_count);
    for _ in 0..spec.class_count {
        let raw: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let blurred = match spec.input_shape[..] {
            [h, w, c] => box_blur(&raw, h, w, c),
            _ => raw.clone(),
        };
        // Tiny images blur to near-constant vectors that Gram-Schmidt can
        // cancel entirely; fall back to the unblurred draw.
        let mut v = orthogonalize(blurred, &protos);
        if l2_norm(&v) < 1e-9 {
            v = orthogonalize(raw.clone(), &protos);
        }
        if l2_norm(&v) < 1e-9 {
            v = raw;
        }
        let norm = l2_norm(&v);
        v.iter_mut().for_each(|x| *x *= PROTOTYPE_RADIUS / norm);
        protos.push(v);
    }
    let k = spec.class_count as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| protos.iter().map(|p| p[j]).sum::<f64>() / k)
        .collect();
    let o = spec.overlap;
    Ok(protos
        .into_iter()
        .map(|p| {
            p.iter()
                .zip(&mean)
                .map(|(a, m)| (1.0 - o) * a + o * m + BACKGROUND)
                .collect()
        })
        .collect())
}

/// Gram-Schmidt against earlier prototypes (each of norm `PROTOTYPE_RADIUS`)
/// while the dimension allows.
fn orthogonalize(mut v: Vec<f64>, protos: &[Vec<f64>]) -> Vec<f64> {
    if protos.len() < v.len() {
        for p in protos {
            let proj: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum::<f64>()
                / (PROTOTYPE_RADIUS * PROTOTYPE_RADIUS);
            v.iter_mut().zip(p).for_each(|(a, b)| *a -= proj * b);
        }
    }
    v
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// 3x3 mean filter over the spatial axes of an `[H, W, C]` image, averaging
/// only the in-bounds neighbours.
fn box_blur(v: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut sum = 0.0;
                let mut n = 0.0;
                for yy in y.saturating_sub(1)..(y + 2).min(h) {
                    for xx in x.saturating_sub(1)..(x + 2).min(w) {
                        sum += v[(yy * w + xx) * c + ch];
                        n += 1.0;
                    }
                }
                out[(y * w + x) * c + ch] = sum / n;
            }
        }
    }
    out
}

/// Generates the dataset. Samples are interleaved by class
/// (`label = index mod class_count`).
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    let protos = class_prototypes(spec)?;
    let d = spec.sample_len();
    // Sample noise from a stream independent of the prototype draws.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = spec.class_count * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % spec.class_count;
        for &p in &protos[c] {
            let z: f64 = StandardNormal.sample(&mut rng);
            data.push(p + NOISE_STD * z);
        }
        labels.push(c);
    }
    let mut shape = vec![n];
    shape.extend_from_slice(&spec.input_shape);
    Ok(Dataset {
        spec: spec.clone(),
        role: Role::Full,
        inputs: Tensor::new(shape, data)?,
        labels,
        origin: (0..n).collect(),
        class_map: None,
    })
}

/// Label-stratified partition into `(query, test)`.
pub fn split(dataset: &Dataset, query_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(query_fraction > 0.0 && query_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "query_fraction {query_fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut query = Vec::new();
    let mut test = Vec::new();
    for (_, mut idx) in dataset.indices_by_class() {
        idx.shuffle(&mut rng);
        let k = (idx.len() as f64 * query_fraction).round() as usize;
        query.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    query.sort_unstable();
    test.sort_unstable();
    Ok((
        dataset.select(&query, Role::Query),
        dataset.select(&test, Role::Test),
    ))
}

/// Keeps `k` randomly chosen classes, relabelled `0..k` in draw order.
pub fn subset_classes(dataset: &Dataset, k: usize, seed: u64) -> Result<Dataset> {
    let total = dataset.class_count();
    if k < 2 || k > total {
        return Err(Error::invalid(format!("k = {k} outside [2, {total}]")));
    }
    let mut classes: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    classes.shuffle(&mut rng);
    classes.truncate(k);
    relabel(dataset, &classes)
}

/// Keeps the listed classes, relabelled `0..k` in the given order.
pub fn select_classes(dataset: &Dataset, classes: &[usize]) -> Result<Dataset> {
    let total = dataset.class_count();
    if classes.is_empty() || classes.iter().any(|&c| c >= total) {
        return Err(Error::invalid(format!(
            "class selection {classes:?} invalid for {total} classes"
        )));
    }
    relabel(dataset, classes)
}

fn relabel(dataset: &Dataset, classes: &[usize]) -> Result<Dataset> {
    let mut new_label = vec![None; dataset.class_count()];
    for (new, &old) in classes.iter().enumerate() {
        if new_label[old].replace(new).is_some() {
            return Err(Error::invalid(format!("class {old} selected twice")));
        }
    }
    let keep: Vec<usize> = (0..dataset.len())
        .filter(|&i| new_label[dataset.labels[i]].is_some())
        .collect();
    let mut out = dataset.select(&keep, dataset.role);
    for l in &mut out.labels {
        *l = new_label[*l].expect("kept class");
    }
    // Compose with any earlier re-indexing so the map refers to generated labels.
    let base = dataset
        .class_map
        .clone()
        .unwrap_or_else(|| (0..dataset.class_count()).collect());
    out.class_map = Some(classes.iter().map(|&c| base[c]).collect());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    pub(crate) fn spec(classes: usize, per_class: usize, overlap: f64, seed: u64) -> DatasetSpec {
        DatasetSpec {
            id: "toy".into(),
            class_count: classes,
            samples_per_class: per_class,
            input_shape: vec![4, 4, 1],
            overlap,
            seed,
        }
    }

    #[test]
    fn full_overlap_collapses_class_means() {
        let protos = class_prototypes(&spec(4, 1, 1.0, 3)).unwrap();
        for p in &protos[1..] {
            for (a, b) in p.iter().zip(&protos[0]) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn separated_classes_are_nearest_prototype_separable() {
        let s = spec(2, 200, 0.0, 11);
        let ds = generate(&s).unwrap();
        let protos = class_prototypes(&s).unwrap();
        let mut hits = 0;
        for i in 0..ds.len() {
            let x = ds.sample(i);
            let d: Vec<f64> = protos
                .iter()
                .map(|p| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect();
            let pred = if d[0] <= d[1] { 0 } else { 1 };
            hits += (pred == ds.labels[i]) as usize;
        }
        assert!(hits as f64 / ds.len() as f64 >= 0.99);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = spec(3, 10, 0.3, 5);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        let other = DatasetSpec {
            seed: 6,
            ..s.clone()
        };
        assert_ne!(
            generate(&s).unwrap().inputs,
            generate(&other).unwrap().inputs
        );
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let ds = generate(&spec(2, 50, 0.0, 1)).unwrap();
        let (q, t) = split(&ds, 0.5, 3).unwrap();
        assert_eq!((q.len(), t.len()), (50, 50));
        for c in 0..2 {
            assert_eq!(q.labels.iter().filter(|&&l| l == c).count(), 25);
        }
        let qs: BTreeSet<usize> = q.origin.iter().copied().collect();
        assert!(t.origin.iter().all(|i| !qs.contains(i)));
        let (q2, _) = split(&ds, 0.5, 4).unwrap();
        assert_eq!(q2.len(), q.len());
        assert_ne!(q2.origin, q.origin);
        assert!(split(&ds, 1.0, 0).is_err());
        assert!(split(&ds, 0.0, 0).is_err());
    }

    #[test]
    fn subset_relabels_bijectively() {
        let ds = generate(&spec(10, 7, 0.0, 1)).unwrap();
        let sub = subset_classes(&ds, 2, 9).unwrap();
        assert_eq!(sub.len(), 14);
        let map = sub.class_map.clone().unwrap();
        assert_eq!(map.len(), 2);
        assert_ne!(map[0], map[1]);
        for i in 0..sub.len() {
            assert_eq!(ds.labels[sub.origin[i]], map[sub.labels[i]]);
        }
        let all = subset_classes(&ds, 10, 9).unwrap();
        assert_eq!(all.len(), ds.len());
        let labels: BTreeSet<usize> = all.class_map.unwrap().into_iter().collect();
        assert_eq!(labels.len(), 10);
        assert!(subset_classes(&ds, 1, 0).is_err());
        assert!(subset_classes(&ds, 11, 0).is_err());
    }

    #[test]
    fn chunk_sizes() {
        let ds = generate(&spec(2, 5, 0.0, 1)).unwrap();
        let sizes: Vec<usize> = ds
            .chunked_iter(3, None)
            .unwrap()
            .map(|c| c.labels.len())
            .collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        let sizes: Vec<usize> = ds
            .chunked_iter(3, Some(4))
            .unwrap()
            .map(|c| c.labels.len())
            .collect();
        assert_eq!(sizes, vec![3, 1]);
        let joined: Vec<f64> = ds
            .chunked_iter(4, None)
            .unwrap()
            .flat_map(|c| c.inputs.into_data())
            .collect();
        assert_eq!(joined, ds.inputs.data());
        assert!(ds.chunked_iter(0, None).is_err());
    }
}
