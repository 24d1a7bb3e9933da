//! Differentiable operator graphs: kernels, models, SGD training and
//! gradient verification.

pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod train;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use model::{Gradients, Model, ModelInfo};
pub use ops::{OpParams, OperatorKind, Padding};
pub use train::{accuracy, train, LossKind, Targets, TrainConfig, TrainHistory};
