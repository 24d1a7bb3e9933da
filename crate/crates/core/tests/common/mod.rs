//! Gradient-check fixtures shared by the integration tests.

use extractlab_core::nn::{Model, OpParams, OperatorKind, Padding};
use extractlab_core::zoo::{ArchitectureSpec, NodeSpec};
use extractlab_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn conv(out: usize, k: usize, stride: usize, padding: Padding) -> OpParams {
    OpParams::Conv {
        out_channels: out,
        kernel: k,
        stride,
        padding,
    }
}

pub fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// A small graph exercising `kind`, with trainable layers on both sides.
pub fn harness(kind: OperatorKind) -> ArchitectureSpec {
    use OperatorKind::*;
    let c1 = NodeSpec::new("c1", Conv, conv(3, 3, 1, Padding::Same), &["input"]);
    let head = |src: &str| NodeSpec::new("head", Fc, OpParams::Fc { units: 3 }, &[src]);
    let nodes = match kind {
        Conv => vec![
            NodeSpec::new("c1", Conv, conv(3, 3, 2, Padding::Valid), &["input"]),
            head("c1"),
        ],
        Fc => vec![
            NodeSpec::new("f1", Fc, OpParams::Fc { units: 4 }, &["input"]),
            head("f1"),
        ],
        Relu | Gelu | Bn | Flatten => vec![
            c1,
            NodeSpec::new("op", kind, OpParams::None, &["c1"]),
            head("op"),
        ],
        Maxpool | Avgpool => vec![
            c1,
            NodeSpec::new("op", kind, OpParams::Pool { size: 2, stride: 2 }, &["c1"]),
            head("op"),
        ],
        Add | Concat => vec![
            c1,
            NodeSpec::new("c2", Conv, conv(3, 1, 1, Padding::Same), &["input"]),
            NodeSpec::new("op", kind, OpParams::None, &["c1", "c2"]),
            head("op"),
        ],
        Softmax => vec![
            NodeSpec::new("f1", Fc, OpParams::Fc { units: 3 }, &["input"]),
            NodeSpec::new("op", Softmax, OpParams::None, &["f1"]),
        ],
    };
    ArchitectureSpec {
        id: format!("grad-{kind}"),
        family: "test".into(),
        input_shape: vec![4, 4, 2],
        class_count: 3,
        nodes,
    }
}

pub fn model_for(kind: OperatorKind, seed: u64) -> Model {
    let mut m = Model::build(&harness(kind), seed).unwrap();
    if kind == OperatorKind::Bn {
        m.calibrate_batch_norm(&random_tensor(vec![8, 4, 4, 2], seed + 100))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bn = m.spec().node_index("op").unwrap();
        for t in 0..2 {
            for v in m.params_mut()[bn][t].data_mut() {
                *v = rng.random_range(0.5..1.5);
            }
        }
    }
    m
}
