//! Scenario runner: parsing, threat-model enforcement, scheduling,
//! execution with preloading, registries and reporting.

pub mod execute;
pub mod record;
pub mod registry;
pub mod scenario;
pub mod schedule;
pub mod threat;

pub use execute::{execute, run_batch, BatchOutcome, Executed};
pub use record::{load_records, report, RecordStore, ReportFormat, RunRecord, Status};
pub use registry::{DataSplits, Registry, ResolvedModel};
pub use scenario::{parse_scenario, AttackKind, AttackSpec, Environment, Scenario, SCHEMA_VERSION};
pub use schedule::{schedule, Assignment, ResourcePlan};
pub use threat::{required_grants, validate_threat_model, Authorized};
