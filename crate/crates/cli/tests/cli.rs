use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn home() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let registry = json!({
        "datasets": [{
            "id": "tiny", "class_count": 4, "samples_per_class": 40,
            "input_shape": [8, 8, 1], "overlap": 0.0, "seed": 0
        }],
        "recipe": {"learning_rate": 0.05, "epochs": 4}
    });
    fs::write(dir.path().join("registry.json"), registry.to_string()).unwrap();
    dir
}

fn extractlab(home: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extractlab"))
        .env("EXTRACTLAB_HOME", home)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn knockoff(id: &str, arch: &str) -> Value {
    json!({
        "schema_version": 1,
        "id": id,
        "attack": {"type": "knockoff", "params": {"query_budget": 40, "recreate": {"epochs": 2}}},
        "target": {"architecture_id": arch, "dataset_id": "tiny"},
        "grants": {"model_knowledge": "hidden", "system_knowledge": "none", "aux_dataset": "partial"},
        "seed": 5,
        "evaluation": ["fidelity"]
    })
}

fn write(path: &Path, doc: &Value) {
    fs::write(path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
}

fn record_files(home: &Path) -> Vec<String> {
    let Ok(entries) = fs::read_dir(home.join("records")) else {
        return Vec::new();
    };
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    names
}

#[test]
fn run_writes_a_record_with_the_schema_version() {
    let h = home();
    let path = h.path().join("ko.json");
    write(&path, &knockoff("ko", "mlp-1"));
    let out = extractlab(h.path(), &["run", path.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.contains("ko [knockoff] ok"), "{text}");
    assert!(text.contains("fidelity="), "{text}");

    let files = record_files(h.path());
    assert_eq!(files.len(), 1, "{files:?}");
    let record: Value = serde_json::from_str(
        &fs::read_to_string(h.path().join("records").join(&files[0])).unwrap(),
    )
    .unwrap();
    assert_eq!(record["schema_version"], 1);
    assert!(record["metrics"]["fidelity"].as_f64().unwrap() >= 0.0);
}

#[test]
fn run_rejects_missing_schema_version_and_unauthorized_scenarios() {
    let h = home();
    let mut doc = knockoff("ko", "mlp-1");
    doc.as_object_mut().unwrap().remove("schema_version");
    let path = h.path().join("bad.json");
    write(&path, &doc);
    let out = extractlab(h.path(), &["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));

    let mut doc = knockoff("blind", "mlp-1");
    doc["grants"]["aux_dataset"] = json!("none");
    write(&path, &doc);
    let out = extractlab(h.path(), &["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAILED"));
}

#[test]
fn batch_exit_code_reflects_every_scenario() {
    let h = home();
    let dir = h.path().join("scenarios");
    fs::create_dir(&dir).unwrap();
    write(&dir.join("a.json"), &knockoff("a", "mlp-1"));
    write(&dir.join("b.json"), &knockoff("b", "mlp-2"));
    let out = extractlab(h.path(), &["batch", dir.to_str().unwrap(), "--slots", "2"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert!(stdout(&out).contains("2 scenarios, 0 failed"));
    assert_eq!(record_files(h.path()).len(), 2);

    write(&dir.join("c.json"), &knockoff("c", "resnet-99"));
    let out = extractlab(h.path(), &["batch", dir.to_str().unwrap(), "--slots", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stdout(&out).contains("3 scenarios, 1 failed"),
        "{}",
        stdout(&out)
    );

    let out = extractlab(h.path(), &["batch", dir.to_str().unwrap(), "--slots", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn report_collates_records_as_csv_and_json() {
    let h = home();
    let dir = h.path().join("scenarios");
    fs::create_dir(&dir).unwrap();
    write(&dir.join("a.json"), &knockoff("a", "mlp-1"));
    write(&dir.join("b.json"), &knockoff("b", "linear"));
    assert!(extractlab(h.path(), &["batch", dir.to_str().unwrap()])
        .status
        .success());
    let records = h.path().join("records");

    let csv = h.path().join("report.csv");
    let out = extractlab(
        h.path(),
        &[
            "report",
            records.to_str().unwrap(),
            "--format",
            "csv",
            "--out",
            csv.to_str().unwrap(),
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.lines().next().unwrap().contains("fidelity"));

    let js = h.path().join("report.json");
    let out = extractlab(
        h.path(),
        &[
            "report",
            records.to_str().unwrap(),
            "--format",
            "json",
            "--out",
            js.to_str().unwrap(),
        ],
    );
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&fs::read_to_string(&js).unwrap()).unwrap();
    assert!(doc.to_string().contains("\"a\"") && doc.to_string().contains("\"b\""));

    let out = extractlab(
        h.path(),
        &[
            "report",
            records.to_str().unwrap(),
            "--format",
            "xml",
            "--out",
            "x",
        ],
    );
    assert!(!out.status.success());
}

#[test]
fn zoo_lists_and_trains_class_subsets() {
    let h = home();
    let out = extractlab(h.path(), &["zoo", "list"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for needle in ["resnet-1", "mini-resnet", "tiny", "blobs-easy"] {
        assert!(text.contains(needle), "{needle} missing from {text}");
    }

    let out = extractlab(
        h.path(),
        &[
            "zoo",
            "train",
            "--arch",
            "mlp-1",
            "--dataset",
            "tiny",
            "--classes",
            "0,2",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(
        text.starts_with("trained") && text.contains("(2 classes)"),
        "{text}"
    );

    let again = extractlab(
        h.path(),
        &[
            "zoo",
            "train",
            "--arch",
            "mlp-1",
            "--dataset",
            "tiny",
            "--classes",
            "0,2",
        ],
    );
    assert!(stdout(&again).starts_with("cached"));
    assert!(
        stdout(&extractlab(h.path(), &["zoo", "list"])).contains("mlp-1 on tiny classes [0, 2]")
    );

    let out = extractlab(
        h.path(),
        &["zoo", "train", "--arch", "mlp-9", "--dataset", "tiny"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_prints_defaults_and_flags_violations() {
    let h = home();
    let path = h.path().join("s.json");
    write(&path, &knockoff("v", "mlp-1"));
    let out = extractlab(h.path(), &["validate", path.to_str().unwrap()]);
    assert!(out.status.success());
    let filled: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(
        filled["attack"]["params"]["output_mode"],
        "confidence_vector"
    );
    assert!(!h.path().join("records").exists());

    let mut doc = knockoff("v", "mlp-1");
    doc["grants"]["model_knowledge"] = json!("observed");
    write(&path, &doc);
    let out = extractlab(h.path(), &["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threat model violation"));

    fs::write(&path, "{not json").unwrap();
    assert_eq!(
        extractlab(h.path(), &["validate", path.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}
