mod common;

use common::{model_for, random_tensor};
use extractlab_core::nn::gradcheck::{check_with, finite_difference_check};
use extractlab_core::nn::{Model, OpParams, OperatorKind};
use extractlab_core::zoo::{ArchitectureSpec, NodeSpec};
use extractlab_core::{Error, Tensor};

#[test]
fn every_operator_matches_finite_differences() {
    for kind in OperatorKind::ALL {
        for seed in 0..3 {
            let m = model_for(kind, seed);
            let probe = random_tensor(vec![2, 4, 4, 2], 50 + seed);
            let r = finite_difference_check(&m, &probe).unwrap();
            assert!(!r.no_parameters);
            assert!(
                r.max_param_error < 1e-4,
                "{kind} seed {seed}: params {}",
                r.max_param_error
            );
            assert!(
                r.max_input_error < 1e-4,
                "{kind} seed {seed}: input {}",
                r.max_input_error
            );
        }
    }
}

#[test]
fn scaled_gradient_is_detected() {
    let m = model_for(OperatorKind::Fc, 1);
    let probe = random_tensor(vec![2, 4, 4, 2], 7);
    let r = check_with(&m, &probe, |g| {
        let w = g.params[0][0].data_mut();
        w[0] *= 2.0;
    })
    .unwrap();
    assert!(r.max_param_error >= 0.3, "{}", r.max_param_error);
}

#[test]
fn parameter_free_chain_reports_flag() {
    let spec = ArchitectureSpec {
        id: "chain".into(),
        family: "test".into(),
        input_shape: vec![4, 4, 1],
        class_count: 4,
        nodes: vec![
            NodeSpec::new("r", OperatorKind::Relu, OpParams::None, &["input"]),
            NodeSpec::new(
                "p",
                OperatorKind::Maxpool,
                OpParams::Pool { size: 2, stride: 2 },
                &["r"],
            ),
            NodeSpec::new("f", OperatorKind::Flatten, OpParams::None, &["p"]),
        ],
    };
    let m = Model::build(&spec, 0).unwrap();
    let r = finite_difference_check(&m, &random_tensor(vec![1, 4, 4, 1], 3)).unwrap();
    assert!(r.no_parameters);
    assert_eq!(r.max_param_error, 0.0);
}

#[test]
fn zero_output_gradient_gives_zero_parameter_gradients() {
    let mut m = model_for(OperatorKind::Concat, 2);
    let x = random_tensor(vec![2, 4, 4, 2], 1);
    let out = m.forward_cached(&x).unwrap();
    let g = m.backward(&Tensor::zeros(out.shape().to_vec())).unwrap();
    assert!(g
        .params
        .iter()
        .flatten()
        .all(|t| t.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn backward_requires_forward_and_matching_shape() {
    let mut m = model_for(OperatorKind::Fc, 2);
    assert!(matches!(
        m.backward(&Tensor::zeros(vec![2, 3])),
        Err(Error::NoForwardCache)
    ));
    m.forward_cached(&random_tensor(vec![2, 4, 4, 2], 1))
        .unwrap();
    assert!(m.backward(&Tensor::zeros(vec![2, 4])).is_err());
}

#[test]
fn softmax_rows_are_positive_distributions() {
    let m = model_for(OperatorKind::Softmax, 4);
    let y = m.forward(&random_tensor(vec![5, 4, 4, 2], 9)).unwrap();
    for row in y.rows() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&p| p > 0.0));
    }
}

#[test]
fn forward_is_bit_deterministic() {
    for kind in OperatorKind::ALL {
        let m = model_for(kind, 5);
        let x = random_tensor(vec![3, 4, 4, 2], 2);
        let a: Vec<u64> = m
            .forward(&x)
            .unwrap()
            .data()
            .iter()
            .map(|v| v.to_bits())
            .collect();
        let b: Vec<u64> = m
            .forward(&x)
            .unwrap()
            .data()
            .iter()
            .map(|v| v.to_bits())
            .collect();
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn maxpool_matches_brute_force_window_scan() {
    let m = model_for(OperatorKind::Maxpool, 1);
    let x = random_tensor(vec![2, 4, 4, 2], 3);
    let pre = m
        .activation(&x, m.spec().node_index("c1").unwrap())
        .unwrap();
    let pooled = m
        .activation(&x, m.spec().node_index("op").unwrap())
        .unwrap();
    for n in 0..2 {
        for oh in 0..2 {
            for ow in 0..2 {
                for c in 0..3 {
                    let mut best = f64::NEG_INFINITY;
                    for dh in 0..2 {
                        for dw in 0..2 {
                            best = best
                                .max(pre.data()[((n * 4 + oh * 2 + dh) * 4 + ow * 2 + dw) * 3 + c]);
                        }
                    }
                    assert_eq!(pooled.data()[((n * 2 + oh) * 2 + ow) * 3 + c], best);
                }
            }
        }
    }
}
