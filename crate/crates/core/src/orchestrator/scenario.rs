//! Scenario documents: strict JSON configuration of one attack run.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::attack::{InversionConfig, KnockoffConfig, StagedStudyConfig, ThreatModel};
use crate::error::{Error, Result};
use crate::sidechannel::{DsConfig, EnvironmentProfile, MachineProfile};
use crate::similarity::{DistillConfig, ProbePair};
use crate::zoo::{catalog, ModelRef};

/// Version of the scenario and record schema understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub id: String,
    pub attack: AttackSpec,
    pub target: ModelRef,
    #[serde(default)]
    pub environment: Environment,
    pub grants: ThreatModel,
    #[serde(default)]
    pub evaluation: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    /// GPU trace profile, for kernel-trace attacks.
    #[serde(default)]
    pub environment_profile: Option<String>,
    /// CPU cache profile, for symbol-histogram attacks.
    #[serde(default)]
    pub machine_profile: Option<String>,
    /// Forces a verbose runtime on top of the selected GPU profile.
    #[serde(default)]
    pub verbose_runtime: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Knockoff,
    Deepsniffer,
    Deeprecon,
    Miface,
    StagedInversion,
    Equivalency,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::Knockoff,
        AttackKind::Deepsniffer,
        AttackKind::Deeprecon,
        AttackKind::Miface,
        AttackKind::StagedInversion,
        AttackKind::Equivalency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Knockoff => "knockoff",
            AttackKind::Deepsniffer => "deepsniffer",
            AttackKind::Deeprecon => "deeprecon",
            AttackKind::Miface => "miface",
            AttackKind::StagedInversion => "staged_inversion",
            AttackKind::Equivalency => "equivalency",
        }
    }

    /// Side-channel attacks observe the whole machine and never share it.
    pub fn is_exclusive(self) -> bool {
        matches!(self, AttackKind::Deepsniffer | AttackKind::Deeprecon)
    }

    /// Every metric the attack can report. Staged studies report each one
    /// per budget, as `name@budget`.
    pub fn metrics(self) -> &'static [&'static str] {
        match self {
            AttackKind::Knockoff => &[
                "fidelity",
                "queries_used",
                "accuracy_target",
                "accuracy_stolen",
                "final_loss",
            ],
            AttackKind::Deepsniffer => &[
                "sequence_fidelity",
                "predicted_length",
                "true_length",
                "noise_events",
            ],
            AttackKind::Deeprecon => &[
                "exact_correct",
                "family_correct",
                "loo_exact_accuracy",
                "loo_family_accuracy",
                "explained_variance",
            ],
            AttackKind::Miface => &[
                "fidelity",
                "queries_used",
                "class_similarity",
                "final_posterior",
                "success",
                "iterations",
            ],
            AttackKind::StagedInversion => &[
                "fidelity",
                "pwcca",
                "class_similarity",
                "final_posterior",
                "success",
            ],
            AttackKind::Equivalency => &[
                "fidelity",
                "pwcca",
                "distilled_pwcca",
                "baseline_pwcca",
                "accuracy_target",
                "accuracy_stolen",
                "accuracy_distilled_target",
                "accuracy_distilled_stolen",
            ],
        }
    }

    pub fn default_evaluation(self) -> &'static [&'static str] {
        match self {
            AttackKind::Knockoff => &["fidelity", "queries_used"],
            AttackKind::Deepsniffer => &["sequence_fidelity", "predicted_length", "true_length"],
            AttackKind::Deeprecon => &["exact_correct", "family_correct"],
            AttackKind::Miface => &["class_similarity", "final_posterior", "success"],
            AttackKind::StagedInversion => &["fidelity", "class_similarity"],
            AttackKind::Equivalency => &["fidelity", "pwcca", "distilled_pwcca"],
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Timing entries that may also be requested as evaluation names.
pub const TIMING_METRICS: &[&str] = &["wall_time"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum AttackSpec {
    Knockoff(KnockoffConfig),
    Deepsniffer(DeepSnifferParams),
    Deeprecon(DeepReconParams),
    Miface(MifaceParams),
    StagedInversion(StagedStudyConfig),
    Equivalency(EquivalencyParams),
}

impl AttackSpec {
    pub fn kind(&self) -> AttackKind {
        match self {
            AttackSpec::Knockoff(_) => AttackKind::Knockoff,
            AttackSpec::Deepsniffer(_) => AttackKind::Deepsniffer,
            AttackSpec::Deeprecon(_) => AttackKind::Deeprecon,
            AttackSpec::Miface(_) => AttackKind::Miface,
            AttackSpec::StagedInversion(_) => AttackKind::StagedInversion,
            AttackSpec::Equivalency(_) => AttackKind::Equivalency,
        }
    }
}

/// Kernel-trace sequence extraction. The DS labeller is trained on
/// noise-free traces of the listed architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepSnifferParams {
    /// Defaults to every catalog architecture except the target's.
    #[serde(default)]
    pub training_architectures: Vec<String>,
    #[serde(default = "default_training_shapes")]
    pub training_shapes: Vec<Vec<usize>>,
    #[serde(default = "default_training_profile")]
    pub training_profile: String,
    #[serde(default = "default_traces")]
    pub traces_per_architecture: usize,
    #[serde(default)]
    pub ds: DsConfig,
}

fn default_training_shapes() -> Vec<Vec<usize>> {
    vec![vec![8, 8, 1], vec![16, 16, 1], vec![8, 8, 3]]
}
fn default_training_profile() -> String {
    "gpu-quiet".into()
}
fn default_traces() -> usize {
    2
}

/// Cache-symbol fingerprinting against a corpus of known architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepReconParams {
    /// Defaults to every catalog architecture.
    #[serde(default)]
    pub corpus_architectures: Vec<String>,
    #[serde(default = "default_per_arch")]
    pub samples_per_architecture: usize,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_per_arch() -> usize {
    5
}
fn default_k() -> usize {
    3
}

/// Steal a surrogate, then invert one class through it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MifaceParams {
    pub extraction: KnockoffConfig,
    pub inversion: InversionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalencyParams {
    pub extraction: KnockoffConfig,
    #[serde(default)]
    pub distill: DistillConfig,
    /// Defaults to each model's penultimate representation.
    #[serde(default)]
    pub probes: Option<Vec<ProbePair>>,
}

fn schema_error(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

fn object_at<'a>(v: &'a mut Value, path: &str) -> Result<&'a mut Map<String, Value>> {
    v.as_object_mut()
        .ok_or_else(|| schema_error(format!("{path} must be an object")))
}

/// Fills the surrogate architecture from the target when a knockoff block
/// leaves it out.
fn default_surrogate(block: &mut Value, path: &str, architecture: Option<&Value>) -> Result<()> {
    let obj = object_at(block, path)?;
    if !obj.contains_key("surrogate_architecture") {
        if let Some(a) = architecture {
            obj.insert("surrogate_architecture".into(), a.clone());
        }
    }
    Ok(())
}

/// Structural fixes applied before strict deserialization: required-field
/// checks with friendly messages and defaults that depend on other fields.
fn prepare(doc: &mut Value) -> Result<()> {
    let root = object_at(doc, "scenario")?;
    if !root.contains_key("schema_version") {
        return Err(schema_error("schema_version required"));
    }
    let architecture = root
        .get("target")
        .and_then(|t| t.get("architecture_id"))
        .cloned();
    let attack = root
        .get_mut("attack")
        .ok_or_else(|| schema_error("attack required"))?;
    let attack = object_at(attack, "attack")?;
    let kind = match attack.get("type") {
        None | Some(Value::Null) => return Err(schema_error("attack.type required")),
        Some(Value::String(s)) => s.clone(),
        Some(other) => {
            return Err(schema_error(format!(
                "attack.type must be a string, got {other}"
            )))
        }
    };
    let params = attack
        .entry("params")
        .or_insert_with(|| Value::Object(Map::new()));
    if params.is_null() {
        *params = Value::Object(Map::new());
    }
    let arch = architecture.as_ref();
    match kind.as_str() {
        "knockoff" | "staged_inversion" => default_surrogate(params, "attack.params", arch)?,
        "miface" | "equivalency" => {
            if let Some(block) = object_at(params, "attack.params")?.get_mut("extraction") {
                default_surrogate(block, "attack.params.extraction", arch)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Parses and validates a scenario document. Defaults are written into the
/// returned value so that serializing it again shows every setting.
pub fn parse_scenario(document: &str) -> Result<Scenario> {
    let mut doc: Value = serde_json::from_str(document).map_err(|e| {
        schema_error(format!(
            "syntax error at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    prepare(&mut doc)?;
    let scenario: Scenario = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            schema_error(inner.to_string())
        } else {
            schema_error(format!("{path}: {inner}"))
        }
    })?;
    scenario.validate()?;
    Ok(scenario.with_explicit_defaults())
}

impl Scenario {
    pub fn kind(&self) -> AttackKind {
        self.attack.kind()
    }

    fn with_explicit_defaults(mut self) -> Self {
        let kind = self.kind();
        if self.evaluation.is_empty() {
            self.evaluation = kind
                .default_evaluation()
                .iter()
                .map(|s| s.to_string())
                .collect();
        }
        match &mut self.attack {
            AttackSpec::Deepsniffer(p) if p.training_architectures.is_empty() => {
                p.training_architectures = catalog::ids()
                    .filter(|&id| id != self.target.architecture_id)
                    .map(String::from)
                    .collect();
            }
            AttackSpec::Deeprecon(p) if p.corpus_architectures.is_empty() => {
                p.corpus_architectures = catalog::ids().map(String::from).collect();
            }
            _ => {}
        }
        self
    }

    /// Field-level checks beyond the JSON shape.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema_error(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(schema_error(format!(
                "id '{}' must be non-empty and use only letters, digits, '-', '_' or '.'",
                self.id
            )));
        }
        let kind = self.kind();
        let env = &self.environment;
        match kind {
            AttackKind::Deepsniffer => {
                if env.machine_profile.is_some() {
                    return Err(schema_error(
                        "environment.machine_profile: deepsniffer observes GPU kernel traces and needs an environment_profile, not a CPU machine_profile",
                    ));
                }
                let id = env.environment_profile.as_deref().ok_or_else(|| {
                    schema_error("environment.environment_profile required for deepsniffer")
                })?;
                if EnvironmentProfile::builtin(id).is_none() {
                    return Err(schema_error(format!(
                        "environment.environment_profile: unknown profile '{id}' (known: {})",
                        EnvironmentProfile::BUILTIN.join(", ")
                    )));
                }
            }
            AttackKind::Deeprecon => {
                if env.environment_profile.is_some() {
                    return Err(schema_error(
                        "environment.environment_profile: deeprecon observes CPU cache symbols and needs a machine_profile, not a GPU environment_profile",
                    ));
                }
                let id = env.machine_profile.as_deref().ok_or_else(|| {
                    schema_error("environment.machine_profile required for deeprecon")
                })?;
                if MachineProfile::builtin(id).is_none() {
                    return Err(schema_error(format!(
                        "environment.machine_profile: unknown profile '{id}' (known: {})",
                        MachineProfile::BUILTIN.join(", ")
                    )));
                }
                if env.verbose_runtime {
                    return Err(schema_error(
                        "environment.verbose_runtime applies to GPU traces only",
                    ));
                }
            }
            _ => {
                if env.environment_profile.is_some()
                    || env.machine_profile.is_some()
                    || env.verbose_runtime
                {
                    return Err(schema_error(format!(
                        "environment: {kind} is a query attack and takes no side-channel profile"
                    )));
                }
            }
        }
        for name in &self.evaluation {
            if !kind.metrics().contains(&name.as_str()) && !TIMING_METRICS.contains(&name.as_str())
            {
                return Err(schema_error(format!(
                    "evaluation: '{name}' is not reported by {kind} (available: {})",
                    kind.metrics().join(", ")
                )));
            }
        }
        let params = |r: Result<()>| r.map_err(|e| schema_error(format!("attack.params: {e}")));
        match &self.attack {
            AttackSpec::Knockoff(c) => params(check_knockoff(c)),
            AttackSpec::Deepsniffer(p) => {
                if p.traces_per_architecture == 0 {
                    return Err(schema_error(
                        "attack.params.traces_per_architecture must be at least 1",
                    ));
                }
                if p.training_shapes.is_empty() {
                    return Err(schema_error(
                        "attack.params.training_shapes must not be empty",
                    ));
                }
                match EnvironmentProfile::builtin(&p.training_profile) {
                    None => Err(schema_error(format!(
                        "attack.params.training_profile: unknown profile '{}'",
                        p.training_profile
                    ))),
                    Some(prof) if prof.verbose_runtime => Err(schema_error(
                        "attack.params.training_profile: DS training traces must come from a non-verbose profile",
                    )),
                    Some(_) => params(p.ds.train.validate()),
                }
            }
            AttackSpec::Deeprecon(p) => {
                if p.samples_per_architecture == 0 || p.k == 0 {
                    return Err(schema_error(
                        "attack.params: samples_per_architecture and k must be at least 1",
                    ));
                }
                Ok(())
            }
            AttackSpec::Miface(p) => {
                params(check_knockoff(&p.extraction))?;
                params(p.inversion.validate())
            }
            AttackSpec::StagedInversion(c) => {
                params(c.validate())?;
                params(c.recreate.validate())
            }
            AttackSpec::Equivalency(p) => {
                params(check_knockoff(&p.extraction))?;
                params(p.distill.validate())
            }
        }
    }
}

fn check_knockoff(c: &KnockoffConfig) -> Result<()> {
    if c.query_budget == 0 {
        return Err(Error::invalid("query_budget must be at least 1"));
    }
    c.recreate.validate()
}
