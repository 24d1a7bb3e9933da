//! Architecture definitions, construction, transfer learning, MAdd
//! accounting and checkpoints.

pub mod catalog;
pub mod checkpoint;
pub mod madd;
pub mod spec;

pub use checkpoint::{load_checkpoint, save_checkpoint, ModelRef};
pub use madd::{compute_madd, operator_sequence, MAddReport};
pub use spec::{ArchitectureSpec, NodeSpec};

use crate::error::{Error, Result};
use crate::nn::{self, Model, OpParams, OperatorKind, Targets, TrainConfig};
use crate::tensor::Tensor;

/// Fresh model with seeded initialization.
pub fn build_model(spec: &ArchitectureSpec, seed: u64) -> Result<Model> {
    Model::build(spec, seed)
}

/// Replaces the final FC head with a freshly initialized one of width
/// `head_classes`, then fine-tunes every layer. `base` is left untouched.
pub fn transfer_learn(
    base: &Model,
    inputs: &Tensor,
    labels: &[usize],
    head_classes: usize,
    config: &TrainConfig,
) -> Result<Model> {
    if head_classes < 2 {
        return Err(Error::invalid("head_classes must be at least 2"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= head_classes) {
        return Err(Error::invalid(format!(
            "label {bad} outside [0, {head_classes})"
        )));
    }
    let topo = base.topology();
    let head = topo
        .order
        .iter()
        .rev()
        .copied()
        .find(|&i| base.spec().nodes[i].kind == OperatorKind::Fc)
        .ok_or_else(|| Error::invalid(format!("'{}' has no FC head", base.spec().id)))?;

    let mut spec = base.spec().clone();
    spec.nodes[head].params = OpParams::Fc {
        units: head_classes,
    };
    spec.class_count = head_classes;
    let fresh = Model::build(&spec, config.seed)?;
    let mut adapted = fresh.clone();
    for (i, node) in adapted.params_mut().iter_mut().enumerate() {
        if i != head {
            node.clone_from(&base.params()[i]);
        }
    }
    let mut info = base.info();
    info.seed = config.seed;
    *adapted.info_mut() = info;
    nn::train(
        &mut adapted,
        inputs,
        &Targets::Hard(labels.to_vec()),
        config,
    )?;
    Ok(adapted)
}
