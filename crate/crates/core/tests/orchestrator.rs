use std::fs;
use std::path::Path;

use extractlab_core::attack::{
    knockoff_extract, AuxDataset, ModelKnowledge, SystemKnowledge, ThreatModel,
};
use extractlab_core::orchestrator::record::records_to_csv;
use extractlab_core::orchestrator::{
    execute, load_records, parse_scenario, report, required_grants, run_batch, schedule,
    validate_threat_model, AttackKind, AttackSpec, Authorized, RecordStore, Registry, ReportFormat,
    Status, SCHEMA_VERSION,
};
use extractlab_core::similarity::fidelity;
use extractlab_core::zoo::ModelRef;
use extractlab_core::Error;
use proptest::prelude::*;
use serde_json::{json, Value};
use tempfile::TempDir;

fn query_grants() -> Value {
    json!({"model_knowledge": "hidden", "system_knowledge": "none", "aux_dataset": "partial"})
}

fn knockoff_doc(id: &str, arch: &str, budget: usize) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "id": id,
        "attack": {"type": "knockoff", "params": {"query_budget": budget, "recreate": {"epochs": 3}}},
        "target": {"architecture_id": arch, "dataset_id": "tiny"},
        "grants": query_grants(),
        "seed": 7
    })
}

/// Repository root with a small dataset and a short training recipe.
fn home() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let registry = json!({
        "datasets": [{
            "id": "tiny", "class_count": 4, "samples_per_class": 60,
            "input_shape": [8, 8, 1], "overlap": 0.0, "seed": 0
        }],
        "recipe": {"learning_rate": 0.05, "epochs": 5}
    });
    fs::write(dir.path().join("registry.json"), registry.to_string()).unwrap();
    dir
}

fn parse(v: &Value) -> extractlab_core::Result<extractlab_core::orchestrator::Scenario> {
    parse_scenario(&v.to_string())
}

#[test]
fn minimal_knockoff_gets_explicit_defaults() {
    let s = parse(&knockoff_doc("k1", "mlp-1", 50)).unwrap();
    assert_eq!(s.kind(), AttackKind::Knockoff);
    assert_eq!(s.evaluation, vec!["fidelity", "queries_used"]);
    let AttackSpec::Knockoff(cfg) = &s.attack else {
        panic!("wrong attack kind");
    };
    assert_eq!(cfg.surrogate_architecture, "mlp-1");
    assert_eq!(cfg.recreate.epochs, 3);
    assert_eq!(s.target.checkpoint_tag, "latest");

    // The filled-in form parses back to the same scenario.
    let echoed = serde_json::to_string(&s).unwrap();
    assert!(echoed.contains("\"output_mode\":\"confidence_vector\""));
    assert_eq!(parse_scenario(&echoed).unwrap(), s);
}

#[test]
fn scenario_errors_name_the_field() {
    let mut v = knockoff_doc("k1", "mlp-1", 50);
    v["attack"].as_object_mut().unwrap().remove("type");
    assert!(parse(&v)
        .unwrap_err()
        .to_string()
        .contains("attack.type required"));

    let mut v = knockoff_doc("k1", "mlp-1", 50);
    v.as_object_mut().unwrap().remove("schema_version");
    assert!(parse(&v)
        .unwrap_err()
        .to_string()
        .contains("schema_version"));

    let mut v = knockoff_doc("k1", "mlp-1", 50);
    v["schema_version"] = json!(99);
    assert!(parse(&v).unwrap_err().to_string().contains("99"));

    let mut v = knockoff_doc("k1", "mlp-1", 50);
    v["attack"]["params"]["recreate"]["epoch"] = json!(2);
    let msg = parse(&v).unwrap_err().to_string();
    assert!(msg.contains("attack") && msg.contains("epoch"), "{msg}");

    let mut v = knockoff_doc("k1", "mlp-1", 50);
    v["evaluation"] = json!(["sequence_fidelity"]);
    assert!(parse(&v)
        .unwrap_err()
        .to_string()
        .contains("sequence_fidelity"));

    assert!(matches!(
        parse_scenario("{not json"),
        Err(Error::Scenario(_))
    ));
}

fn sniffer_doc(env: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "id": "ds",
        "attack": {"type": "deepsniffer", "params": {"traces_per_architecture": 1}},
        "target": {"architecture_id": "vgg-1", "dataset_id": "tiny"},
        "environment": env,
        "grants": {"model_knowledge": "observed", "system_knowledge": "partial", "aux_dataset": "none"}
    })
}

#[test]
fn deepsniffer_needs_a_gpu_profile() {
    let err = parse(&sniffer_doc(json!({"machine_profile": "i7-4770-like"})))
        .unwrap_err()
        .to_string();
    assert!(err.contains("environment.machine_profile"), "{err}");
    assert!(parse(&sniffer_doc(json!({}))).is_err());
    assert!(parse(&sniffer_doc(json!({"environment_profile": "gpu-x"}))).is_err());
    let s = parse(&sniffer_doc(json!({"environment_profile": "gpu-noisy"}))).unwrap();
    let AttackSpec::Deepsniffer(p) = &s.attack else {
        panic!("wrong attack kind");
    };
    assert!(!p.training_architectures.contains(&"vgg-1".to_string()));
    assert!(!p.training_architectures.is_empty());
}

#[test]
fn query_attacks_reject_side_channel_profiles() {
    let mut v = knockoff_doc("k1", "mlp-1", 50);
    v["environment"] = json!({"environment_profile": "gpu-quiet"});
    assert!(parse(&v).is_err());
}

#[test]
fn threat_model_grants() {
    use AuxDataset as D;
    use ModelKnowledge as M;
    use SystemKnowledge as S;
    let required = required_grants(AttackKind::Knockoff);
    assert_eq!(required, ThreatModel::new(M::Hidden, S::None, D::Partial));
    assert!(ThreatModel::new(M::Hidden, S::Partial, D::Partial)
        .violations_against(&required)
        .is_empty());
    assert_eq!(
        ThreatModel::new(M::Hidden, S::None, D::None)
            .violations_against(&required)
            .len(),
        1
    );
    assert_eq!(
        ThreatModel::new(M::Observed, S::None, D::None)
            .violations_against(&required)
            .len(),
        2
    );
    let side = required_grants(AttackKind::Deeprecon);
    assert_eq!(
        ThreatModel::new(M::Observed, S::None, D::None)
            .violations_against(&side)
            .len(),
        1
    );
}

#[test]
fn unauthorized_scenarios_never_run() {
    let mut v = knockoff_doc("k-denied", "mlp-1", 50);
    v["grants"]["aux_dataset"] = json!("none");
    let s = parse(&v).unwrap();
    let violations = validate_threat_model(&s);
    assert_eq!(violations.len(), 1);
    assert!(Authorized::check(&s).is_err());

    let home = home();
    let registry = Registry::open(home.path()).unwrap();
    let store = RecordStore::new(&registry.records_dir());
    let done = execute(&s, &registry, &store).unwrap();
    assert_eq!(done.record.status, Status::Failed);
    assert!(done
        .record
        .failure_reason
        .as_deref()
        .unwrap()
        .contains("threat model"));
    assert!(
        !home.path().join("models").exists(),
        "target must not be trained"
    );
}

#[test]
fn aux_initialization_needs_aux_data() {
    let v = json!({
        "schema_version": SCHEMA_VERSION,
        "id": "mi",
        "attack": {"type": "miface", "params": {
            "extraction": {"query_budget": 10},
            "inversion": {"target_class": 0, "init_mode": "auxiliary_sample"}
        }},
        "target": {"architecture_id": "mlp-1", "dataset_id": "tiny"},
        "grants": {"model_knowledge": "hidden", "system_knowledge": "none", "aux_dataset": "none"}
    });
    let s = parse(&v).unwrap();
    let violations = validate_threat_model(&s);
    assert!(
        violations.iter().any(|m| m.contains("auxiliary_sample")),
        "{violations:?}"
    );
}

fn ids(kinds: &[AttackKind]) -> Vec<(String, AttackKind)> {
    kinds
        .iter()
        .enumerate()
        .map(|(i, &k)| (format!("s{i}"), k))
        .collect()
}

#[test]
fn schedule_examples() {
    use AttackKind::*;
    let plan = schedule(&ids(&[Knockoff, Deeprecon, Miface]), 2).unwrap();
    let windows: Vec<(usize, bool)> = plan
        .assignments
        .iter()
        .map(|a| (a.window, a.exclusive))
        .collect();
    assert_eq!(windows, vec![(0, false), (1, true), (2, false)]);
    assert_eq!(plan.assignments[1].slots, vec![0, 1]);
    assert!(schedule(&ids(&[Knockoff]), 0).is_err());
    assert_eq!(schedule(&[], 3).unwrap().window_count(), 0);
}

fn arb_kind() -> impl Strategy<Value = AttackKind> {
    prop::sample::select(AttackKind::ALL.to_vec())
}

proptest! {
    #[test]
    fn schedules_never_oversubscribe(kinds in prop::collection::vec(arb_kind(), 0..20), slots in 1usize..5) {
        let plan = schedule(&ids(&kinds), slots).unwrap();
        prop_assert_eq!(plan.assignments.len(), kinds.len());
        let mut positions: Vec<usize> = plan.assignments.iter().map(|a| a.position).collect();
        positions.sort_unstable();
        prop_assert_eq!(positions, (0..kinds.len()).collect::<Vec<_>>());
        for w in 0..plan.window_count() {
            let members: Vec<_> = plan.window(w).collect();
            prop_assert!(!members.is_empty());
            let used: Vec<usize> = members.iter().flat_map(|a| a.slots.clone()).collect();
            let mut unique = used.clone();
            unique.sort_unstable();
            unique.dedup();
            prop_assert_eq!(unique.len(), used.len());
            prop_assert!(used.iter().all(|&s| s < slots));
            if members.iter().any(|a| kinds[a.position].is_exclusive()) {
                prop_assert_eq!(members.len(), 1);
                prop_assert_eq!(members[0].slots.len(), slots);
            }
        }
        // FIFO: windows never go backwards in submission order.
        prop_assert!(plan.assignments.windows(2).all(|p| p[0].window <= p[1].window));
    }
}

#[test]
fn executed_knockoff_matches_a_direct_call() {
    let home = home();
    let registry = Registry::open(home.path()).unwrap();
    let store = RecordStore::new(&registry.records_dir());
    let s = parse(&knockoff_doc("k-direct", "mlp-1", 40)).unwrap();
    let done = execute(&s, &registry, &store).unwrap();
    assert!(done.record.is_ok(), "{:?}", done.record.failure_reason);
    assert_eq!(done.record.schema_version, SCHEMA_VERSION);
    assert_eq!(done.record.metrics["queries_used"], 40.0);
    assert!(done.record.timings.contains_key("wall_time"));
    for a in &done.record.artifacts {
        assert!(home.path().join(a).exists(), "{a}");
    }

    let target = registry.resolve(&s.target).unwrap();
    assert!(target.cache_hit);
    let data = registry.splits("tiny", None).unwrap();
    let AttackSpec::Knockoff(cfg) = &s.attack else {
        unreachable!()
    };
    let (stolen, _) = knockoff_extract(&target.model, &data.query, cfg, s.seed).unwrap();
    assert_eq!(
        done.record.metrics["fidelity"],
        fidelity(&target.model, &stolen, &data.test).unwrap()
    );

    let again = execute(&s, &registry, &store).unwrap();
    assert_eq!(again.record.metrics, done.record.metrics);
    assert_ne!(again.path, done.path);
}

#[test]
fn unknown_architecture_fails_with_its_id() {
    let home = home();
    let registry = Registry::open(home.path()).unwrap();
    let store = RecordStore::new(&registry.records_dir());
    let s = parse(&knockoff_doc("k-missing", "resnet-99", 10)).unwrap();
    let done = execute(&s, &registry, &store).unwrap();
    assert_eq!(done.record.status, Status::Failed);
    assert!(done
        .record
        .failure_reason
        .as_deref()
        .unwrap()
        .contains("resnet-99"));
    assert!(done.record.metrics.is_empty());
    assert!(done.path.is_file());
}

#[test]
fn registry_resolution_and_subsets() {
    let home = home();
    let registry = Registry::open(home.path()).unwrap();
    let r = ModelRef::new("linear", "tiny");
    let first = registry.resolve(&r).unwrap();
    assert!(!first.cache_hit);
    let second = registry.resolve(&r).unwrap();
    assert!(second.cache_hit);
    assert_eq!(first.model.flat_params(), second.model.flat_params());
    assert_eq!(registry.cached_models().unwrap().len(), 1);

    let mut sub = ModelRef::new("linear", "tiny");
    sub.class_subset = Some(vec![1, 3]);
    let m = registry.resolve(&sub).unwrap();
    assert_eq!(m.model.output_width(), 2);
    let splits = registry.splits("tiny", Some(&[1, 3])).unwrap();
    assert!(splits.test.labels.iter().all(|&l| l < 2));
    assert_eq!(splits.test.class_map, Some(vec![1, 3]));

    assert!(registry.resolve(&ModelRef::new("linear", "nope")).is_err());
    sub.class_subset = Some(vec![3, 1]);
    assert!(registry.resolve(&sub).is_err());
    sub.class_subset = Some(vec![9]);
    assert!(registry.resolve(&sub).is_err());
}

#[test]
fn splits_partition_the_dataset() {
    let home = home();
    let registry = Registry::open(home.path()).unwrap();
    let s = registry.splits("tiny", None).unwrap();
    assert_eq!(s.train.len() + s.query.len() + s.test.len(), 240);
    let mut origins: Vec<usize> = [&s.train, &s.query, &s.test]
        .iter()
        .flat_map(|d| d.origin.clone())
        .collect();
    origins.sort_unstable();
    assert_eq!(origins, (0..240).collect::<Vec<_>>());
    // Second call reads the cache and agrees.
    assert_eq!(registry.splits("tiny", None).unwrap(), s);
}

fn records_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn batch_reports_and_record_files() {
    let home = home();
    let registry = Registry::open(home.path()).unwrap();
    let store = RecordStore::new(&registry.records_dir());
    let scenarios = vec![
        parse(&knockoff_doc("a", "linear", 20)).unwrap(),
        parse(&knockoff_doc("b", "no-such-arch", 20)).unwrap(),
        parse(&knockoff_doc("c", "linear", 30)).unwrap(),
    ];
    let out = run_batch(&scenarios, 2, &registry, &store).unwrap();
    assert!(!out.all_ok());
    let ok: Vec<bool> = out.runs.iter().map(|r| r.record.is_ok()).collect();
    assert_eq!(ok, vec![true, false, true]);

    // No staging directories or temp files are left behind.
    let names = records_in(&registry.records_dir());
    assert!(names.iter().all(|n| !n.starts_with('.')), "{names:?}");
    assert_eq!(names.iter().filter(|n| n.ends_with(".json")).count(), 3);

    let records = load_records(&registry.records_dir()).unwrap();
    assert_eq!(records.len(), 3);
    let csv = records_to_csv(&records).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("scenario_id,attack,target,"));
    assert!(header.ends_with(",status"));
    assert_eq!(csv.lines().count(), 4);
    assert!(csv
        .lines()
        .any(|l| l.starts_with("b,knockoff,") && l.ends_with(",failed")));

    let json_out = home.path().join("out/report.json");
    report(&records, ReportFormat::Json, &json_out).unwrap();
    let back: Vec<extractlab_core::orchestrator::RunRecord> =
        serde_json::from_slice(&fs::read(&json_out).unwrap()).unwrap();
    assert_eq!(back, records);
    assert!(report(&[], ReportFormat::Csv, &home.path().join("x.csv")).is_err());
    assert!("xml".parse::<ReportFormat>().is_err());
}
