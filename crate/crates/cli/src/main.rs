use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use extractlab_core::orchestrator::{
    self, execute, load_records, parse_scenario, report, run_batch, validate_threat_model,
    RecordStore, Registry, ReportFormat, RunRecord, Scenario,
};
use extractlab_core::zoo::{catalog, ModelRef};

/// Exit status for scenarios that parse but fail or are refused.
const EXIT_FAILED: u8 = 1;
/// Exit status for unreadable or invalid input.
const EXIT_INVALID: u8 = 2;

#[derive(Parser)]
#[command(
    name = "extractlab",
    version,
    about = "Run model extraction scenarios against a desk-scale model zoo"
)]
struct Cli {
    /// Repository root holding datasets, models and records.
    #[arg(long, env = "EXTRACTLAB_HOME", default_value = ".", global = true)]
    home: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its record.
    Run { scenario: PathBuf },
    /// Run every scenario file in a directory.
    Batch {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        slots: usize,
    },
    /// Collate records into a CSV or JSON report.
    Report {
        records: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: ReportFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inspect or populate the model zoo.
    Zoo {
        #[command(subcommand)]
        command: ZooCommand,
    },
    /// Check a scenario and print it with every default filled in.
    Validate { scenario: PathBuf },
}

#[derive(Subcommand)]
enum ZooCommand {
    /// List architectures, datasets and cached checkpoints.
    List,
    /// Train a model variant and save its checkpoint.
    Train {
        #[arg(long)]
        arch: String,
        #[arg(long)]
        dataset: String,
        /// Comma-separated class indices to keep.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<usize>>,
        /// Retrain even when a checkpoint exists.
        #[arg(long)]
        force: bool,
    },
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: extractlab_core::Error| e.to_string())
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("invalid scenario {}", path.display()))
}

fn summary(r: &RunRecord) -> String {
    let status = if r.is_ok() { "ok" } else { "FAILED" };
    let mut line = format!("{} [{}] {status}", r.scenario.id, r.scenario.kind());
    if let Some(reason) = &r.failure_reason {
        line += &format!(": {reason}");
    }
    for name in &r.scenario.evaluation {
        if let Some(v) = r.metrics.get(name).or_else(|| r.timings.get(name)) {
            line += &format!(" {name}={v:.4}");
        }
    }
    line
}

fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn run(cli: Cli) -> Result<u8> {
    let home = cli.home;
    match cli.command {
        Command::Run { scenario } => {
            let scenario = match read_scenario(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e:#}");
                    return Ok(EXIT_INVALID);
                }
            };
            let registry = Registry::open(&home)?;
            let store = RecordStore::new(&registry.records_dir());
            let done = execute(&scenario, &registry, &store)?;
            println!("{}", summary(&done.record));
            println!("record: {}", done.path.display());
            Ok(if done.record.is_ok() { 0 } else { EXIT_FAILED })
        }
        Command::Batch { dir, slots } => {
            if slots == 0 {
                bail!("--slots must be at least 1");
            }
            let mut scenarios = Vec::new();
            let mut invalid = 0;
            for f in scenario_files(&dir)? {
                match read_scenario(&f) {
                    Ok(s) => scenarios.push(s),
                    Err(e) => {
                        eprintln!("{e:#}");
                        invalid += 1;
                    }
                }
            }
            if scenarios.is_empty() && invalid == 0 {
                bail!("no scenario files in {}", dir.display());
            }
            let registry = Registry::open(&home)?;
            let store = RecordStore::new(&registry.records_dir());
            let outcome = run_batch(&scenarios, slots, &registry, &store)?;
            for a in &outcome.plan.assignments {
                let r = &outcome.runs[a.position].record;
                let mode = if a.exclusive { "exclusive" } else { "shared" };
                println!(
                    "window {} slots {:?} {mode}: {}",
                    a.window,
                    a.slots,
                    summary(r)
                );
            }
            let failed = outcome.runs.iter().filter(|r| !r.record.is_ok()).count() + invalid;
            println!(
                "{} scenarios, {failed} failed",
                outcome.runs.len() + invalid
            );
            Ok(if failed == 0 { 0 } else { EXIT_FAILED })
        }
        Command::Report {
            records,
            format,
            out,
        } => {
            let recs = load_records(&records)?;
            for p in report(&recs, format, &out)? {
                println!("wrote {}", p.display());
            }
            Ok(0)
        }
        Command::Zoo { command } => {
            let registry = Registry::open(&home)?;
            match command {
                ZooCommand::List => {
                    println!("architectures:");
                    for (id, family) in catalog::ARCHITECTURES {
                        println!("  {id:<14} {family}");
                    }
                    println!("datasets:");
                    for d in registry.datasets() {
                        println!(
                            "  {:<14} {} classes, {} per class, shape {:?}, overlap {}",
                            d.id, d.class_count, d.samples_per_class, d.input_shape, d.overlap
                        );
                    }
                    println!("checkpoints:");
                    for m in registry.cached_models()? {
                        let subset = m
                            .class_subset
                            .map(|s| format!(" classes {s:?}"))
                            .unwrap_or_default();
                        println!(
                            "  {} on {}{subset} [{}], {} epochs",
                            m.architecture_id, m.dataset_id, m.checkpoint_tag, m.epochs_trained
                        );
                    }
                    Ok(0)
                }
                ZooCommand::Train {
                    arch,
                    dataset,
                    classes,
                    force,
                } => {
                    let mut r = ModelRef::new(&arch, &dataset);
                    r.class_subset = classes;
                    let resolved = if force {
                        registry.retrain(&r)?
                    } else {
                        registry.resolve(&r)?
                    };
                    let how = if resolved.cache_hit {
                        "cached"
                    } else {
                        "trained"
                    };
                    println!(
                        "{how} {} ({} classes) in {:.2}s: {}",
                        r.key(),
                        resolved.model.output_width(),
                        resolved.seconds,
                        resolved.checkpoint.display()
                    );
                    Ok(0)
                }
            }
        }
        Command::Validate { scenario } => {
            let scenario = match read_scenario(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{e:#}");
                    return Ok(EXIT_INVALID);
                }
            };
            println!("{}", serde_json::to_string_pretty(&scenario)?);
            let violations = validate_threat_model(&scenario);
            if violations.is_empty() {
                eprintln!(
                    "valid; grants cover {}",
                    orchestrator::required_grants(scenario.kind())
                );
                Ok(0)
            } else {
                for v in violations {
                    eprintln!("threat model violation: {v}");
                }
                Ok(EXIT_FAILED)
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
