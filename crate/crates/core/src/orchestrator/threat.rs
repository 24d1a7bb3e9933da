//! Threat-model enforcement.

use crate::attack::{AuxDataset, InitMode, ModelKnowledge, SystemKnowledge, ThreatModel};
use crate::orchestrator::scenario::{AttackKind, AttackSpec, Scenario};

/// The knowledge an attack assumes of its adversary.
pub fn required_grants(kind: AttackKind) -> ThreatModel {
    match kind {
        AttackKind::Deepsniffer | AttackKind::Deeprecon => ThreatModel::new(
            ModelKnowledge::Observed,
            SystemKnowledge::Partial,
            AuxDataset::None,
        ),
        AttackKind::Knockoff
        | AttackKind::Miface
        | AttackKind::StagedInversion
        | AttackKind::Equivalency => ThreatModel::new(
            ModelKnowledge::Hidden,
            SystemKnowledge::None,
            AuxDataset::Partial,
        ),
    }
}

/// Every way the scenario's grants fall short of what its attack needs.
/// An empty list means the scenario may run.
pub fn validate_threat_model(scenario: &Scenario) -> Vec<String> {
    let kind = scenario.kind();
    let required = required_grants(kind);
    let mut out: Vec<String> = scenario
        .grants
        .violations_against(&required)
        .into_iter()
        .map(|v| format!("{kind} {required}: {v}"))
        .collect();
    let aux_init = match &scenario.attack {
        AttackSpec::Miface(p) => p.inversion.init_mode == InitMode::AuxiliarySample,
        AttackSpec::StagedInversion(c) => c.inversion.init_mode == InitMode::AuxiliarySample,
        _ => false,
    };
    if aux_init && scenario.grants.aux_dataset == AuxDataset::None {
        out.push(format!(
            "{kind}: init_mode auxiliary_sample needs aux_dataset = partial, granted none"
        ));
    }
    out
}

/// A scenario whose grants have been checked. Attacks only run through this
/// type, so an unauthorized scenario cannot reach execution.
#[derive(Debug, Clone, Copy)]
pub struct Authorized<'a>(&'a Scenario);

impl<'a> Authorized<'a> {
    pub fn check(scenario: &'a Scenario) -> Result<Self, Vec<String>> {
        let v = validate_threat_model(scenario);
        if v.is_empty() {
            Ok(Self(scenario))
        } else {
            Err(v)
        }
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.0
    }
}
