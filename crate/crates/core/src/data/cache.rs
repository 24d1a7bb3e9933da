//! Dataset cache directories: `meta.json`, `samples.bin` (little-endian
//! `f64`, samples row-major in index order) and `labels.bin` (little-endian
//! `i32`).

use std::fs::{self, File};
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{Chunk, Dataset, DatasetSpec, Role};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    #[serde(flatten)]
    pub spec: DatasetSpec,
    pub role: Role,
    pub sample_count: usize,
    pub sample_shape: Vec<usize>,
    #[serde(default)]
    pub class_map: Option<Vec<usize>>,
    #[serde(default)]
    pub origin: Option<Vec<usize>>,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::Corrupt {
        what: "dataset cache",
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes the dataset into `dir` through a temporary sibling directory.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let tmp = parent.join(format!(
        ".tmp-{}-{}-{}",
        dir.file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("dataset"),
        std::process::id(),
        chrono::Utc::now().timestamp_nanos_opt().unwrap_or_default()
    ));
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let meta = CacheMeta {
        spec: dataset.spec.clone(),
        role: dataset.role,
        sample_count: dataset.len(),
        sample_shape: dataset.sample_shape().to_vec(),
        class_map: dataset.class_map.clone(),
        origin: Some(dataset.origin.clone()),
    };
    let write = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let p = tmp.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write("meta.json", serde_json::to_vec_pretty(&meta)?)?;
    write(
        "samples.bin",
        dataset
            .inputs
            .data()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect(),
    )?;
    write(
        "labels.bin",
        dataset
            .labels
            .iter()
            .flat_map(|&l| (l as i32).to_le_bytes())
            .collect(),
    )?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&tmp, dir).map_err(|e| Error::io(dir, e))
}

fn read_meta(dir: &Path) -> Result<CacheMeta> {
    let p = dir.join("meta.json");
    if !p.is_file() {
        return Err(Error::NotFound {
            what: "dataset cache",
            id: dir.display().to_string(),
        });
    }
    let raw = fs::read(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_slice(&raw).map_err(|e| corrupt(&p, e.to_string()))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta = read_meta(dir)?;
    let width: usize = meta.sample_shape.iter().product();
    let sp = dir.join("samples.bin");
    let raw = fs::read(&sp).map_err(|e| Error::io(&sp, e))?;
    if raw.len() != meta.sample_count * width * 8 {
        return Err(corrupt(
            &sp,
            format!(
                "expected {} bytes, found {}",
                meta.sample_count * width * 8,
                raw.len()
            ),
        ));
    }
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let lp = dir.join("labels.bin");
    let raw = fs::read(&lp).map_err(|e| Error::io(&lp, e))?;
    if raw.len() != meta.sample_count * 4 {
        return Err(corrupt(
            &lp,
            format!(
                "expected {} bytes, found {}",
                meta.sample_count * 4,
                raw.len()
            ),
        ));
    }
    let labels = raw
        .chunks_exact(4)
        .map(|c| {
            let v = i32::from_le_bytes(c.try_into().expect("4 bytes"));
            usize::try_from(v).map_err(|_| corrupt(&lp, format!("negative label {v}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut shape = vec![meta.sample_count];
    shape.extend_from_slice(&meta.sample_shape);
    Ok(Dataset {
        spec: meta.spec,
        role: meta.role,
        inputs: Tensor::new(shape, data)?,
        labels,
        origin: meta
            .origin
            .unwrap_or_else(|| (0..meta.sample_count).collect()),
        class_map: meta.class_map,
    })
}

/// Streams a cached dataset from disk one chunk at a time; only the current
/// chunk is resident.
pub struct CacheChunks {
    samples: BufReader<File>,
    labels: BufReader<File>,
    path: PathBuf,
    sample_shape: Vec<usize>,
    pos: usize,
    end: usize,
    chunk_size: usize,
}

impl CacheChunks {
    pub fn open(dir: &Path, chunk_size: usize, limit: Option<usize>) -> Result<Self> {
        if chunk_size == 0 {
            return Err(Error::invalid("chunk_size must be at least 1"));
        }
        let meta = read_meta(dir)?;
        let sp = dir.join("samples.bin");
        let lp = dir.join("labels.bin");
        let samples = File::open(&sp).map_err(|e| Error::io(&sp, e))?;
        let labels = File::open(&lp).map_err(|e| Error::io(&lp, e))?;
        Ok(Self {
            samples: BufReader::new(samples),
            labels: BufReader::new(labels),
            path: dir.to_path_buf(),
            sample_shape: meta.sample_shape,
            pos: 0,
            end: limit.map_or(meta.sample_count, |l| l.min(meta.sample_count)),
            chunk_size,
        })
    }

    fn read_chunk(&mut self) -> Result<Chunk> {
        let n = self.chunk_size.min(self.end - self.pos);
        let width: usize = self.sample_shape.iter().product();
        let mut buf = vec![0u8; n * width * 8];
        self.samples
            .read_exact(&mut buf)
            .map_err(|e| corrupt(&self.path, format!("samples truncated: {e}")))?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut lbuf = vec![0u8; n * 4];
        self.labels
            .read_exact(&mut lbuf)
            .map_err(|e| corrupt(&self.path, format!("labels truncated: {e}")))?;
        let labels = lbuf
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")).max(0) as usize)
            .collect();
        let mut shape = vec![n];
        shape.extend_from_slice(&self.sample_shape);
        let chunk = Chunk {
            start: self.pos,
            inputs: Tensor::new(shape, data)?,
            labels,
        };
        self.pos += n;
        Ok(chunk)
    }
}

impl Iterator for CacheChunks {
    type Item = Result<Chunk>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.end {
            return None;
        }
        let r = self.read_chunk();
        if r.is_err() {
            self.pos = self.end;
        }
        Some(r)
    }
}
