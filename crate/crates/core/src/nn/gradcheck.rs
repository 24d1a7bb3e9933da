//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::model::{Gradients, Model};
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error over trainable parameters.
    pub max_param_error: f64,
    /// Max relative error over the probe input.
    pub max_input_error: f64,
    pub no_parameters: bool,
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-12)
}

/// Probe objective: a fixed pseudo-random weighting of the graph output.
fn objective_weights(model: &Model, probe: &Tensor) -> Result<Tensor> {
    let out = model.forward(probe)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut w = Tensor::zeros(out.shape().to_vec());
    for v in w.data_mut() {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        *v = sign * rng.random_range(0.5..1.5);
    }
    Ok(w)
}

fn objective(model: &Model, probe: &Tensor, weights: &Tensor) -> Result<f64> {
    let out = model.forward(probe)?;
    Ok(out
        .data()
        .iter()
        .zip(weights.data())
        .map(|(a, b)| a * b)
        .sum())
}

/// Max relative error between analytic and numeric gradients of the probe
/// objective.
pub fn finite_difference_check(model: &Model, probe: &Tensor) -> Result<GradCheckReport> {
    check_with(model, probe, |_| {})
}

/// As [`finite_difference_check`], with a hook that may alter the analytic
/// gradients before comparison.
pub fn check_with(
    model: &Model,
    probe: &Tensor,
    tamper: impl FnOnce(&mut Gradients),
) -> Result<GradCheckReport> {
    let weights = objective_weights(model, probe)?;
    let mut work = model.clone();
    work.forward_cached(probe)?;
    let mut analytic = work.backward(&weights)?;
    tamper(&mut analytic);

    let decls = model.topology().params.clone();
    let mut max_param: f64 = 0.0;
    let mut any = false;
    for (node, node_decls) in decls.iter().enumerate() {
        for (t, decl) in node_decls.iter().enumerate() {
            if !decl.trainable {
                continue;
            }
            for k in 0..model.params()[node][t].len() {
                any = true;
                let orig = work.params()[node][t].data()[k];
                work.params_mut()[node][t].data_mut()[k] = orig + FD_STEP;
                let up = objective(&work, probe, &weights)?;
                work.params_mut()[node][t].data_mut()[k] = orig - FD_STEP;
                let down = objective(&work, probe, &weights)?;
                work.params_mut()[node][t].data_mut()[k] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                max_param = max_param.max(rel_error(analytic.params[node][t].data()[k], numeric));
            }
        }
    }

    let mut max_input: f64 = 0.0;
    let mut x = probe.clone();
    for k in 0..x.len() {
        let orig = x.data()[k];
        x.data_mut()[k] = orig + FD_STEP;
        let up = objective(&work, &x, &weights)?;
        x.data_mut()[k] = orig - FD_STEP;
        let down = objective(&work, &x, &weights)?;
        x.data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        max_input = max_input.max(rel_error(analytic.input.data()[k], numeric));
    }

    Ok(GradCheckReport {
        max_param_error: if any { max_param } else { 0.0 },
        max_input_error: max_input,
        no_parameters: !any,
    })
}
