//! Scenario execution: resource preloading, attack dispatch, metric
//! collection and record persistence.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Instant;

use chrono::Utc;

use crate::attack::{
    knockoff_extract, miface_invert, save_reconstruction, staged_inversion_study, BlackBox,
    KnockoffConfig,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{accuracy, Model};
use crate::orchestrator::record::{provides, RecordStore, RunRecord, Status};
use crate::orchestrator::registry::{DataSplits, Registry, ResolvedModel};
use crate::orchestrator::scenario::{
    AttackSpec, DeepReconParams, DeepSnifferParams, EquivalencyParams, MifaceParams, Scenario,
    SCHEMA_VERSION,
};
use crate::orchestrator::schedule::{schedule, ResourcePlan};
use crate::orchestrator::threat::Authorized;
use crate::sidechannel::ds::canonical_sequence;
use crate::sidechannel::{
    dr_classify, ds_extract, fit_fingerprint_space, leave_one_out, sequence_fidelity,
    simulate_kernel_trace, simulate_symbol_stream, train_ds_model, EnvironmentProfile, EventKind,
    MachineProfile,
};
use crate::similarity::{equivalency_report, fidelity};
use crate::tensor::cosine_similarity;
use crate::zoo::{catalog, operator_sequence, save_checkpoint, ArchitectureSpec, ModelRef};

type Metrics = BTreeMap<String, f64>;

/// What an attack hands back: metrics plus artifact paths inside the
/// staging directory.
struct Outcome {
    metrics: Metrics,
    artifacts: Vec<PathBuf>,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<PathBuf> {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_vec_pretty(value)?).map_err(|e| Error::io(&p, e))?;
    Ok(p)
}

/// Everything an attack may need, loaded before it starts.
struct Resources {
    target: Option<ResolvedModel>,
    data: DataSplits,
}

/// Loads the dataset splits and the target model concurrently.
fn preload(scenario: &Scenario, registry: &Registry) -> Result<Resources> {
    let r = &scenario.target;
    let needs_model = !scenario.kind().is_exclusive();
    thread::scope(|s| {
        let data = s.spawn(|| registry.splits(&r.dataset_id, r.class_subset.as_deref()));
        let model = needs_model.then(|| s.spawn(|| registry.resolve(r)));
        let data = data
            .join()
            .map_err(|_| Error::invalid("dataset loader panicked"))??;
        let target = match model {
            Some(h) => Some(
                h.join()
                    .map_err(|_| Error::invalid("model loader panicked"))??,
            ),
            None => None,
        };
        Ok(Resources { target, data })
    })
}

fn target_spec(scenario: &Scenario, data: &Dataset) -> Result<ArchitectureSpec> {
    catalog::architecture(
        &scenario.target.architecture_id,
        data.sample_shape(),
        data.class_count(),
    )
}

fn run_knockoff(
    target: &Model,
    data: &DataSplits,
    cfg: &KnockoffConfig,
    seed: u64,
    dir: &Path,
) -> Result<(Model, Outcome)> {
    let api = BlackBox::new(target);
    let (stolen, record) = knockoff_extract(&api, &data.query, cfg, seed)?;
    let mut metrics = Metrics::new();
    metrics.insert("fidelity".into(), fidelity(target, &stolen, &data.test)?);
    metrics.insert("queries_used".into(), api.queries_used() as f64);
    metrics.insert(
        "accuracy_target".into(),
        accuracy(target, &data.test.inputs, &data.test.labels)?,
    );
    metrics.insert(
        "accuracy_stolen".into(),
        accuracy(&stolen, &data.test.inputs, &data.test.labels)?,
    );
    metrics.insert(
        "final_loss".into(),
        record.epoch_losses.last().copied().unwrap_or(f64::NAN),
    );
    let ckpt = save_checkpoint(
        &stolen,
        &ModelRef::new(&cfg.surrogate_architecture, "stolen"),
        &dir.join("surrogate"),
    )?;
    let rec = write_json(dir, "attack_record.json", &record)?;
    Ok((
        stolen,
        Outcome {
            metrics,
            artifacts: vec![ckpt, rec],
        },
    ))
}

fn run_deepsniffer(
    scenario: &Scenario,
    p: &DeepSnifferParams,
    data: &Dataset,
    dir: &Path,
) -> Result<Outcome> {
    let env_id = scenario
        .environment
        .environment_profile
        .as_deref()
        .unwrap_or_default();
    let mut profile = EnvironmentProfile::builtin(env_id).ok_or_else(|| Error::NotFound {
        what: "environment profile",
        id: env_id.into(),
    })?;
    profile.verbose_runtime |= scenario.environment.verbose_runtime;
    let train_profile =
        EnvironmentProfile::builtin(&p.training_profile).ok_or_else(|| Error::NotFound {
            what: "environment profile",
            id: p.training_profile.clone(),
        })?;
    let width = data.class_count();
    let mut corpus = Vec::new();
    let mut trace_seed = scenario.seed.wrapping_mul(1_000_003);
    for arch in &p.training_architectures {
        for shape in &p.training_shapes {
            let spec = catalog::architecture(arch, shape, width)?;
            let truth = operator_sequence(&spec)?;
            for _ in 0..p.traces_per_architecture {
                trace_seed = trace_seed.wrapping_add(1);
                corpus.push((
                    simulate_kernel_trace(&spec, &train_profile, trace_seed)?,
                    truth.clone(),
                ));
            }
        }
    }
    let classifier = train_ds_model(&corpus, &p.ds)?;
    let spec = target_spec(scenario, data)?;
    let trace = simulate_kernel_trace(&spec, &profile, scenario.seed)?;
    let predicted = ds_extract(&trace, &classifier)?;
    let truth = canonical_sequence(&operator_sequence(&spec)?);
    let mut metrics = Metrics::new();
    metrics.insert(
        "sequence_fidelity".into(),
        sequence_fidelity(&predicted, &truth)?,
    );
    metrics.insert("predicted_length".into(), predicted.len() as f64);
    metrics.insert("true_length".into(), truth.len() as f64);
    metrics.insert(
        "noise_events".into(),
        trace
            .iter()
            .filter(|e| e.true_kind == EventKind::Noise)
            .count() as f64,
    );
    let trace_path = dir.join("trace.jsonl");
    fs::write(&trace_path, crate::sidechannel::trace::to_jsonl(&trace)?)
        .map_err(|e| Error::io(&trace_path, e))?;
    let pred = write_json(
        dir,
        "prediction.json",
        &serde_json::json!({ "predicted": predicted, "truth": truth }),
    )?;
    Ok(Outcome {
        metrics,
        artifacts: vec![trace_path, pred],
    })
}

fn run_deeprecon(
    scenario: &Scenario,
    p: &DeepReconParams,
    data: &Dataset,
    dir: &Path,
) -> Result<Outcome> {
    let id = scenario
        .environment
        .machine_profile
        .as_deref()
        .unwrap_or_default();
    let profile = MachineProfile::builtin(id).ok_or_else(|| Error::NotFound {
        what: "machine profile",
        id: id.into(),
    })?;
    let width = data.class_count();
    let mut corpus = Vec::new();
    let base = scenario.seed.wrapping_mul(1_000_003);
    let mut n = 0u64;
    for arch in &p.corpus_architectures {
        let spec = catalog::architecture(arch, data.sample_shape(), width)?;
        for _ in 0..p.samples_per_architecture {
            n += 1;
            corpus.push(simulate_symbol_stream(
                &spec,
                &profile,
                base.wrapping_add(n),
            )?);
        }
    }
    let spec = target_spec(scenario, data)?;
    let observed = simulate_symbol_stream(&spec, &profile, scenario.seed)?;
    let k = p.k.min(corpus.len());
    let model = fit_fingerprint_space(&corpus, k)?;
    let prediction = dr_classify(&observed, &model);
    let loo = leave_one_out(&corpus, k)?;
    let mut metrics = Metrics::new();
    metrics.insert(
        "exact_correct".into(),
        flag(prediction.architecture == spec.id),
    );
    metrics.insert(
        "family_correct".into(),
        flag(prediction.family == spec.family),
    );
    metrics.insert("loo_exact_accuracy".into(), loo.exact_accuracy);
    metrics.insert("loo_family_accuracy".into(), loo.family_accuracy);
    metrics.insert("explained_variance".into(), model.explained_variance());
    let csv_path = dir.join("corpus.csv");
    fs::write(
        &csv_path,
        crate::sidechannel::symbols::histograms_to_csv(&corpus)?,
    )
    .map_err(|e| Error::io(&csv_path, e))?;
    let pred = write_json(
        dir,
        "prediction.json",
        &serde_json::json!({ "observed": observed, "prediction": prediction }),
    )?;
    Ok(Outcome {
        metrics,
        artifacts: vec![csv_path, pred],
    })
}

fn class_mean(test: &Dataset, class: usize) -> Result<Vec<f64>> {
    test.class_mean(class)
        .ok_or_else(|| Error::invalid(format!("test split has no samples of class {class}")))
}

fn run_miface(
    target: &Model,
    data: &DataSplits,
    p: &MifaceParams,
    seed: u64,
    dir: &Path,
) -> Result<Outcome> {
    let (stolen, mut out) = run_knockoff(target, data, &p.extraction, seed, dir)?;
    let inv = miface_invert(&stolen, &p.inversion, Some(&data.query), seed)?;
    let mean = class_mean(&data.test, p.inversion.target_class)?;
    let m = &mut out.metrics;
    m.retain(|k, _| k == "fidelity" || k == "queries_used");
    m.insert(
        "class_similarity".into(),
        cosine_similarity(inv.reconstruction.data(), &mean),
    );
    m.insert("final_posterior".into(), inv.final_posterior());
    m.insert("success".into(), flag(inv.success));
    m.insert("iterations".into(), (inv.posteriors.len() - 1) as f64);
    out.artifacts.extend(save_reconstruction(
        &inv.reconstruction,
        p.inversion.target_class,
        dir,
        "reconstruction",
    )?);
    Ok(out)
}

fn run_staged(
    target: &Model,
    data: &DataSplits,
    cfg: &crate::attack::StagedStudyConfig,
    seed: u64,
    dir: &Path,
) -> Result<Outcome> {
    let api = BlackBox::new(target);
    let stages = staged_inversion_study(&api, &data.query, &data.test, cfg, seed)?;
    let mut metrics = Metrics::new();
    let mut artifacts = Vec::new();
    for s in &stages {
        let b = s.budget;
        metrics.insert(format!("fidelity@{b}"), s.fidelity);
        metrics.insert(format!("pwcca@{b}"), s.pwcca_distance);
        metrics.insert(format!("class_similarity@{b}"), s.class_similarity);
        metrics.insert(format!("final_posterior@{b}"), s.final_posterior);
        metrics.insert(format!("success@{b}"), flag(s.success));
        artifacts.extend(save_reconstruction(
            &s.reconstruction,
            cfg.inversion.target_class,
            dir,
            &format!("reconstruction_{b}"),
        )?);
    }
    Ok(Outcome { metrics, artifacts })
}

fn run_equivalency(
    target: &Model,
    data: &DataSplits,
    p: &EquivalencyParams,
    seed: u64,
    dir: &Path,
) -> Result<Outcome> {
    let (stolen, mut out) = run_knockoff(target, data, &p.extraction, seed, dir)?;
    let report = equivalency_report(
        target,
        &stolen,
        &data.query,
        &data.test,
        &p.distill,
        p.probes.as_deref(),
    )?;
    let d = &report.similarity.pwcca_distance;
    let m = &mut out.metrics;
    m.retain(|k, _| k == "fidelity");
    m.insert("pwcca".into(), d.iter().sum::<f64>() / d.len() as f64);
    m.insert("distilled_pwcca".into(), report.distilled_pwcca);
    m.insert("baseline_pwcca".into(), report.baseline_pwcca);
    m.insert("accuracy_target".into(), report.similarity.accuracy_target);
    m.insert("accuracy_stolen".into(), report.similarity.accuracy_stolen);
    m.insert(
        "accuracy_distilled_target".into(),
        report.accuracy_distilled_target,
    );
    m.insert(
        "accuracy_distilled_stolen".into(),
        report.accuracy_distilled_stolen,
    );
    out.artifacts
        .push(write_json(dir, "equivalency.json", &report)?);
    Ok(out)
}

fn run_authorized(
    auth: Authorized<'_>,
    registry: &Registry,
    dir: &Path,
    timings: &mut Metrics,
) -> Result<Outcome> {
    let scenario = auth.scenario();
    registry.check_ref(&scenario.target)?;
    let res = preload(scenario, registry)?;
    if let Some(t) = &res.target {
        timings.insert("target_resolve_seconds".into(), t.seconds);
        timings.insert("target_cache_hit".into(), flag(t.cache_hit));
    }
    let seed = scenario.seed;
    let target = || {
        res.target
            .as_ref()
            .map(|t| &t.model)
            .expect("query attacks preload the target")
    };
    match &scenario.attack {
        AttackSpec::Knockoff(cfg) => {
            run_knockoff(target(), &res.data, cfg, seed, dir).map(|(_, o)| o)
        }
        AttackSpec::Deepsniffer(p) => run_deepsniffer(scenario, p, &res.data.test, dir),
        AttackSpec::Deeprecon(p) => run_deeprecon(scenario, p, &res.data.test, dir),
        AttackSpec::Miface(p) => run_miface(target(), &res.data, p, seed, dir),
        AttackSpec::StagedInversion(cfg) => run_staged(target(), &res.data, cfg, seed, dir),
        AttackSpec::Equivalency(p) => run_equivalency(target(), &res.data, p, seed, dir),
    }
}

#[derive(Debug, Clone)]
pub struct Executed {
    pub record: RunRecord,
    pub path: PathBuf,
}

/// Runs one scenario and persists its record. Failures of any stage become
/// a failed record; only errors writing the record itself are returned.
pub fn execute(scenario: &Scenario, registry: &Registry, store: &RecordStore) -> Result<Executed> {
    let started = Utc::now();
    let clock = Instant::now();
    let staging = store.stage(&scenario.id)?;
    let mut timings = Metrics::new();
    let result = scenario
        .validate()
        .and_then(|()| match Authorized::check(scenario) {
            Ok(auth) => run_authorized(auth, registry, &staging.dir, &mut timings),
            Err(v) => Err(Error::Scenario(format!(
                "threat model violation: {}",
                v.join("; ")
            ))),
        });
    timings.insert("wall_time".into(), clock.elapsed().as_secs_f64());
    let (status, metrics, artifacts, failure_reason) = match result {
        Ok(out) => {
            let missing: Vec<&String> = scenario
                .evaluation
                .iter()
                .filter(|name| !provides(&out.metrics, &timings, name))
                .collect();
            let non_finite: Vec<&String> = out
                .metrics
                .iter()
                .filter(|(_, v)| !v.is_finite())
                .map(|(k, _)| k)
                .collect();
            if !missing.is_empty() {
                (
                    Status::Failed,
                    Metrics::new(),
                    Vec::new(),
                    Some(format!("requested metrics not produced: {missing:?}")),
                )
            } else if !non_finite.is_empty() {
                (
                    Status::Failed,
                    Metrics::new(),
                    Vec::new(),
                    Some(format!("non-finite metrics: {non_finite:?}")),
                )
            } else {
                let rel = out
                    .artifacts
                    .iter()
                    .map(|p| p.strip_prefix(&staging.dir).unwrap_or(p).to_path_buf())
                    .collect::<Vec<_>>();
                (Status::Ok, out.metrics, rel, None)
            }
        }
        Err(e) => (
            Status::Failed,
            Metrics::new(),
            Vec::new(),
            Some(e.to_string()),
        ),
    };
    if let Some(reason) = &failure_reason {
        log::warn!("scenario {} failed: {reason}", scenario.id);
    }
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.clone(),
        status,
        started,
        ended: Utc::now(),
        metrics,
        timings,
        artifacts: artifacts
            .iter()
            .map(|p| p.to_string_lossy().into_owned())
            .collect(),
        failure_reason,
    };
    let (path, record) = store.commit(record, Some(staging), registry.root())?;
    Ok(Executed { record, path })
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub plan: ResourcePlan,
    /// In submission order.
    pub runs: Vec<Executed>,
}

impl BatchOutcome {
    pub fn all_ok(&self) -> bool {
        self.runs.iter().all(|r| r.record.is_ok())
    }
}

/// Schedules the batch and runs each window's scenarios concurrently, one
/// thread per assignment; windows run in order.
pub fn run_batch(
    scenarios: &[Scenario],
    slots: usize,
    registry: &Registry,
    store: &RecordStore,
) -> Result<BatchOutcome> {
    let jobs: Vec<_> = scenarios.iter().map(|s| (s.id.clone(), s.kind())).collect();
    let plan = schedule(&jobs, slots)?;
    let mut runs: Vec<Option<Executed>> = vec![None; scenarios.len()];
    for w in 0..plan.window_count() {
        let results: Vec<(usize, Result<Executed>)> = thread::scope(|s| {
            let handles: Vec<_> = plan
                .window(w)
                .map(|a| {
                    let sc = &scenarios[a.position];
                    (a.position, s.spawn(move || execute(sc, registry, store)))
                })
                .collect();
            handles
                .into_iter()
                .map(|(i, h)| {
                    (
                        i,
                        h.join()
                            .unwrap_or_else(|_| Err(Error::invalid("scenario thread panicked"))),
                    )
                })
                .collect()
        });
        for (i, r) in results {
            runs[i] = Some(r?);
        }
    }
    Ok(BatchOutcome {
        plan,
        runs: runs
            .into_iter()
            .map(|r| r.expect("every scenario is scheduled"))
            .collect(),
    })
}
