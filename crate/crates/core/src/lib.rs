//! Desk-scale simulation of deep-learning model extraction attacks.
//!
//! The crate bundles a small differentiable tensor engine ([`nn`]), a zoo of
//! miniature architectures ([`zoo`]), synthetic datasets with a spectral
//! complexity score ([`data`]), query-based extraction and inversion
//! attacks ([`attack`]), simulated side channels ([`sidechannel`]),
//! similarity measurements ([`similarity`]) and a scenario runner
//! ([`orchestrator`]).

pub mod attack;
pub mod data;
pub mod error;
pub mod nn;
pub mod orchestrator;
mod rng;
pub mod sidechannel;
pub mod similarity;
pub mod tensor;
pub mod zoo;

pub use error::{Error, Result};
pub use nn::{Model, OperatorKind, TrainConfig};
pub use tensor::Tensor;
pub use zoo::{ArchitectureSpec, ModelRef};
