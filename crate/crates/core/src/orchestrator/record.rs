//! Run records, their on-disk store and tabular reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// Outcome of one scenario run. `metrics` depends only on the scenario;
/// `timings` holds wall-clock measurements and cache behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub status: Status,
    pub started: DateTime<Utc>,
    pub ended: DateTime<Utc>,
    pub metrics: BTreeMap<String, f64>,
    pub timings: BTreeMap<String, f64>,
    /// Paths relative to the repository root.
    pub artifacts: Vec<String>,
    pub failure_reason: Option<String>,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn has_evaluation(&self, name: &str) -> bool {
        provides(&self.metrics, &self.timings, name)
    }
}

/// Whether a requested evaluation name is covered: as a metric, a timing,
/// or (for budget sweeps) a `name@budget` metric.
pub fn provides(
    metrics: &BTreeMap<String, f64>,
    timings: &BTreeMap<String, f64>,
    name: &str,
) -> bool {
    metrics.contains_key(name)
        || timings.contains_key(name)
        || metrics
            .keys()
            .any(|k| k.split_once('@').is_some_and(|(m, _)| m == name))
}

/// Writes records and their artifacts under one directory. A record file
/// appears only after its artifact directory is complete.
#[derive(Debug)]
pub struct RecordStore {
    dir: PathBuf,
    writer: Mutex<()>,
}

/// Scratch directory for a run's artifacts before they are published.
#[derive(Debug)]
pub struct Staging {
    pub dir: PathBuf,
}

impl RecordStore {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            writer: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stage(&self, scenario_id: &str) -> Result<Staging> {
        let dir = self.dir.join(format!(
            ".staging-{scenario_id}-{}-{}",
            std::process::id(),
            Utc::now().timestamp_nanos_opt().unwrap_or_default()
        ));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Staging { dir })
    }

    /// Publishes staged artifacts (if any) and then the record, returning the
    /// record path. Artifact paths in the record are rewritten from the
    /// staging directory to their final location, relative to `root`.
    pub fn commit(
        &self,
        mut record: RunRecord,
        staging: Option<Staging>,
        root: &Path,
    ) -> Result<(PathBuf, RunRecord)> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let id = &record.scenario.id;
        let mut n = 0;
        while self.dir.join(format!("{id}__{n}.json")).exists()
            || self.dir.join(format!("{id}__{n}")).exists()
        {
            n += 1;
        }
        let stem = format!("{id}__{n}");
        if let Some(st) = staging {
            let has_files = fs::read_dir(&st.dir)
                .map_err(|e| Error::io(&st.dir, e))?
                .next()
                .is_some();
            if has_files && record.is_ok() {
                let dest = self.dir.join(&stem);
                fs::rename(&st.dir, &dest).map_err(|e| Error::io(&dest, e))?;
                let rel = dest.strip_prefix(root).unwrap_or(&dest).to_path_buf();
                record.artifacts = record
                    .artifacts
                    .iter()
                    .map(|a| rel.join(a).to_string_lossy().into_owned())
                    .collect();
            } else {
                record.artifacts.clear();
                fs::remove_dir_all(&st.dir).map_err(|e| Error::io(&st.dir, e))?;
            }
        }
        let path = self.dir.join(format!("{stem}.json"));
        let tmp = self.dir.join(format!(".{stem}.json.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&record)?).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok((path, record))
    }
}

/// Every record file directly inside `dir`, in file-name order.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().is_some_and(|x| x == "json")
                && !p
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with('.'))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let raw = fs::read(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_slice(&raw).map_err(|e| Error::Corrupt {
                what: "run record",
                path: p.clone(),
                reason: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::invalid(format!(
                "unknown report format '{other}' (json or csv)"
            ))),
        }
    }
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::invalid(format!("csv: {e}"))
}

fn format_value(v: f64) -> String {
    v.to_string()
}

/// One row per record: scenario id, attack, target, every metric seen in
/// any record (sorted), status. Absent metrics are blank.
pub fn records_to_csv(records: &[RunRecord]) -> Result<String> {
    let columns: BTreeSet<&str> = records
        .iter()
        .flat_map(|r| r.metrics.keys().map(String::as_str))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["scenario_id", "attack", "target"];
    header.extend(columns.iter().copied());
    header.push("status");
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![
            r.scenario.id.clone(),
            r.scenario.kind().to_string(),
            r.scenario.target.key(),
        ];
        row.extend(columns.iter().map(|c| {
            r.metrics
                .get(*c)
                .map(|&v| format_value(v))
                .unwrap_or_default()
        }));
        row.push(if r.is_ok() { "ok" } else { "failed" }.into());
        w.write_record(&row).map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

/// Long-format rows `(scenario_id, attack, metric, budget, value)` for every
/// `metric@budget` entry, sorted by scenario, metric and budget.
pub fn budget_sweep_csv(records: &[RunRecord]) -> Result<Option<String>> {
    let mut rows: Vec<(String, String, String, u64, f64)> = Vec::new();
    for r in records {
        for (k, &v) in &r.metrics {
            if let Some((metric, budget)) = k.split_once('@') {
                let budget: u64 = budget.parse().map_err(|_| {
                    Error::invalid(format!("metric '{k}' has a non-numeric budget"))
                })?;
                rows.push((
                    r.scenario.id.clone(),
                    r.scenario.kind().to_string(),
                    metric.to_string(),
                    budget,
                    v,
                ));
            }
        }
    }
    if rows.is_empty() {
        return Ok(None);
    }
    rows.sort_by(|a, b| (&a.0, &a.2, a.3).cmp(&(&b.0, &b.2, b.3)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario_id", "attack", "metric", "budget", "value"])
        .map_err(csv_err)?;
    for (id, attack, metric, budget, v) in rows {
        w.write_record([id, attack, metric, budget.to_string(), format_value(v)])
            .map_err(csv_err)?;
    }
    Ok(Some(
        String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)?,
    ))
}

/// Writes the report and returns every file written. CSV reports with
/// budget sweeps also get a `<stem>_long.csv` sibling.
pub fn report(records: &[RunRecord], format: ReportFormat, out: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::invalid("no records to report"));
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            fs::write(out, serde_json::to_vec_pretty(records)?).map_err(|e| Error::io(out, e))?;
            written.push(out.to_path_buf());
        }
        ReportFormat::Csv => {
            fs::write(out, records_to_csv(records)?).map_err(|e| Error::io(out, e))?;
            written.push(out.to_path_buf());
            if let Some(long) = budget_sweep_csv(records)? {
                let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
                let p = out.with_file_name(format!("{stem}_long.csv"));
                fs::write(&p, long).map_err(|e| Error::io(&p, e))?;
                written.push(p);
            }
        }
    }
    Ok(written)
}
