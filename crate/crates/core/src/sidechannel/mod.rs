//! Simulated side channels and the architecture-inference pipelines built
//! on them: kernel-trace sequence labelling and cache-symbol fingerprinting.

pub mod ds;
pub mod edit;
pub mod fingerprint;
pub mod symbols;
pub mod trace;

pub use ds::{ds_extract, train_ds_model, DsClassifier, DsConfig, DS_VOCABULARY};
pub use edit::{levenshtein, sequence_fidelity};
pub use fingerprint::{
    dr_classify, fit_fingerprint_space, leave_one_out, DrPrediction, FingerprintModel, LooReport,
};
pub use symbols::{simulate_symbol_stream, MachineProfile, Symbol, SymbolHistogram};
pub use trace::{simulate_kernel_trace, EnvironmentProfile, EventKind, KernelTraceEvent};
