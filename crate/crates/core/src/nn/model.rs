use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{self, OperatorKind};
use crate::rng;
use crate::tensor::Tensor;
use crate::zoo::spec::{ArchitectureSpec, Source, Topology};

/// Training provenance carried alongside the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ModelInfo {
    pub seed: u64,
    pub epochs_trained: usize,
    pub bn_calibrated: bool,
}

struct ForwardCache {
    input: Tensor,
    activations: Vec<Option<Tensor>>,
}

/// Gradient of a scalar objective with respect to every parameter tensor
/// (same layout as [`Model::params`]) and the graph input.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Vec<Tensor>>,
    pub input: Tensor,
}

impl Gradients {
    pub fn scale(&mut self, s: f64) {
        for node in &mut self.params {
            for t in node {
                for v in t.data_mut() {
                    *v *= s;
                }
            }
        }
    }
}

/// A parameterized operator graph.
///
/// `forward` is pure. `forward_cached` additionally keeps every activation
/// so that `backward` can run; one model instance must not be shared between
/// concurrent training loops.
pub struct Model {
    spec: ArchitectureSpec,
    topo: Topology,
    params: Vec<Vec<Tensor>>,
    info: ModelInfo,
    cache: Option<ForwardCache>,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            topo: self.topo.clone(),
            params: self.params.clone(),
            info: self.info,
            cache: None,
        }
    }
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("architecture", &self.spec.id)
            .field("parameters", &self.parameter_count())
            .field("info", &self.info)
            .finish()
    }
}

impl Model {
    /// Builds a model with Glorot-uniform weights, zero biases and identity
    /// batch-norm statistics.
    pub fn build(spec: &ArchitectureSpec, seed: u64) -> Result<Self> {
        let topo = spec.validate()?;
        let mut rng = rng::seeded(seed, rng::INIT);
        let mut params = Vec::with_capacity(spec.nodes.len());
        for decls in &topo.params {
            let mut node_params = Vec::with_capacity(decls.len());
            for d in decls {
                let mut t = Tensor::zeros(d.shape.clone());
                match d.name {
                    "weight" => {
                        let limit = (6.0 / (d.fan_in + d.fan_out) as f64).sqrt();
                        for v in t.data_mut() {
                            *v = rng.random_range(-limit..limit);
                        }
                    }
                    "gamma" | "running_var" => t = Tensor::filled(d.shape.clone(), 1.0),
                    _ => {}
                }
                node_params.push(t);
            }
            params.push(node_params);
        }
        Ok(Self {
            spec: spec.clone(),
            topo,
            params,
            info: ModelInfo {
                seed,
                ..Default::default()
            },
            cache: None,
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn info(&self) -> ModelInfo {
        self.info
    }

    pub(crate) fn info_mut(&mut self) -> &mut ModelInfo {
        &mut self.info
    }

    pub fn params(&self) -> &[Vec<Tensor>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Tensor>] {
        self.cache = None;
        &mut self.params
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    pub fn output_width(&self) -> usize {
        self.spec.class_count
    }

    pub fn output_node(&self) -> usize {
        self.topo.output
    }

    /// Node whose activation is the pre-softmax representation. `None` when
    /// the softmax reads the graph input directly.
    pub fn logits_node(&self) -> Option<usize> {
        let out = self.topo.output;
        if self.spec.nodes[out].kind == OperatorKind::Softmax {
            match self.topo.sources[out][0] {
                Source::Node(j) => Some(j),
                Source::Input => None,
            }
        } else {
            Some(out)
        }
    }

    pub fn ends_in_softmax(&self) -> bool {
        self.spec.nodes[self.topo.output].kind == OperatorKind::Softmax
    }

    /// All stored scalars, trainable or not.
    pub fn parameter_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.topo
            .params
            .iter()
            .zip(&self.params)
            .flat_map(|(d, p)| d.iter().zip(p))
            .filter(|(d, _)| d.trainable)
            .map(|(_, t)| t.len())
            .sum()
    }

    /// Parameters flattened in spec node order, declared tensor order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params
            .iter()
            .flatten()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for t in self.params_mut().iter_mut().flatten() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != self.spec.input_shape.len() + 1
            || x.shape()[1..] != self.spec.input_shape[..]
        {
            return Err(Error::invalid(format!(
                "input batch shape {:?} does not match model input {:?}",
                x.shape(),
                self.spec.input_shape
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor, until: Option<usize>) -> Result<Vec<Option<Tensor>>> {
        self.check_input(x)?;
        let mut acts: Vec<Option<Tensor>> = vec![None; self.spec.nodes.len()];
        for &i in &self.topo.order {
            let node = &self.spec.nodes[i];
            let inputs: Vec<&Tensor> = self.topo.sources[i]
                .iter()
                .map(|s| match s {
                    Source::Input => x,
                    Source::Node(j) => acts[*j].as_ref().expect("topological order"),
                })
                .collect();
            let out = ops::forward(
                node.kind,
                &node.params,
                &self.params[i],
                &inputs,
                &self.topo.shapes[i],
            );
            if !out.is_finite() {
                return Err(Error::NonFinite(format!(
                    "node '{}' ({})",
                    node.id, node.kind
                )));
            }
            acts[i] = Some(out);
            if until == Some(i) {
                break;
            }
        }
        Ok(acts)
    }

    /// Output of the whole graph for a batch `[N, ...input_shape]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut acts = self.run(x, None)?;
        Ok(acts[self.topo.output].take().expect("output computed"))
    }

    /// Activation of one node for a batch.
    pub fn activation(&self, x: &Tensor, node: usize) -> Result<Tensor> {
        let mut acts = self.run(x, Some(node))?;
        acts[node]
            .take()
            .ok_or_else(|| Error::invalid(format!("node {node} not reached")))
    }

    /// Pre-softmax representation.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        match self.logits_node() {
            Some(n) => self.activation(x, n),
            None => Ok(x.clone()),
        }
    }

    /// Forward pass that populates the activation cache for [`Model::backward`].
    pub fn forward_cached(&mut self, x: &Tensor) -> Result<Tensor> {
        let acts = self.run(x, None)?;
        let out = acts[self.topo.output].clone().expect("output computed");
        self.cache = Some(ForwardCache {
            input: x.clone(),
            activations: acts,
        });
        Ok(out)
    }

    /// Cached activation of a node from the last [`Model::forward_cached`].
    pub fn cached_activation(&self, node: usize) -> Result<&Tensor> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        cache.activations[node]
            .as_ref()
            .ok_or(Error::NoForwardCache)
    }

    pub fn cached_input(&self) -> Result<&Tensor> {
        Ok(&self.cache.as_ref().ok_or(Error::NoForwardCache)?.input)
    }

    /// Backpropagates a gradient of the graph output.
    pub fn backward(&self, output_gradient: &Tensor) -> Result<Gradients> {
        self.backward_from(Some(self.topo.output), output_gradient)
    }

    /// Backpropagates a gradient seeded at `start` (a node index, or the graph
    /// input when `None`).
    pub fn backward_from(&self, start: Option<usize>, seed: &Tensor) -> Result<Gradients> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        self.backward_with(cache, start, seed)
    }

    fn backward_with(
        &self,
        cache: &ForwardCache,
        start: Option<usize>,
        seed: &Tensor,
    ) -> Result<Gradients> {
        let mut params: Vec<Vec<Tensor>> = self
            .params
            .iter()
            .map(|node| {
                node.iter()
                    .map(|t| Tensor::zeros(t.shape().to_vec()))
                    .collect()
            })
            .collect();
        let Some(start) = start else {
            if seed.shape() != cache.input.shape() {
                return Err(Error::invalid("seed gradient shape does not match input"));
            }
            return Ok(Gradients {
                params,
                input: seed.clone(),
            });
        };
        let start_act = cache.activations[start]
            .as_ref()
            .ok_or(Error::NoForwardCache)?;
        if seed.shape() != start_act.shape() {
            return Err(Error::invalid(format!(
                "output gradient shape {:?} does not match activation shape {:?}",
                seed.shape(),
                start_act.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.spec.nodes.len()];
        grads[start] = Some(seed.clone());
        let mut input_grad = Tensor::zeros(cache.input.shape().to_vec());
        for &i in self.topo.order.iter().rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.spec.nodes[i];
            let inputs: Vec<&Tensor> = self.topo.sources[i]
                .iter()
                .map(|s| match s {
                    Source::Input => &cache.input,
                    Source::Node(j) => cache.activations[*j].as_ref().expect("cached"),
                })
                .collect();
            let out = cache.activations[i].as_ref().expect("cached");
            let ng = ops::backward(node.kind, &node.params, &self.params[i], &inputs, out, &g);
            for (slot, pg) in params[i].iter_mut().zip(ng.params) {
                *slot = pg;
            }
            for (src, ig) in self.topo.sources[i].iter().zip(ng.inputs) {
                let target = match src {
                    Source::Input => &mut input_grad,
                    Source::Node(j) => {
                        grads[*j].get_or_insert_with(|| Tensor::zeros(ig.shape().to_vec()))
                    }
                };
                for (a, b) in target.data_mut().iter_mut().zip(ig.data()) {
                    *a += b;
                }
            }
        }
        Ok(Gradients {
            params,
            input: input_grad,
        })
    }

    /// Fixes batch-norm running statistics from a calibration batch. Nodes are
    /// calibrated in execution order so later statistics see normalized
    /// upstream activations.
    pub fn calibrate_batch_norm(&mut self, x: &Tensor) -> Result<()> {
        let bn_nodes: Vec<usize> = self
            .topo
            .order
            .iter()
            .copied()
            .filter(|&i| self.spec.nodes[i].kind == OperatorKind::Bn)
            .collect();
        for i in bn_nodes {
            let src = self.topo.sources[i][0];
            let act = match src {
                Source::Input => x.clone(),
                Source::Node(j) => self.activation(x, j)?,
            };
            let c = *act.shape().last().unwrap();
            let count = (act.len() / c) as f64;
            let mut mean = vec![0.0; c];
            for (k, v) in act.data().iter().enumerate() {
                mean[k % c] += v;
            }
            mean.iter_mut().for_each(|m| *m /= count);
            let mut var = vec![0.0; c];
            for (k, v) in act.data().iter().enumerate() {
                let d = v - mean[k % c];
                var[k % c] += d * d;
            }
            var.iter_mut().for_each(|v| *v /= count);
            self.params[i][2].data_mut().copy_from_slice(&mean);
            self.params[i][3].data_mut().copy_from_slice(&var);
        }
        self.info.bn_calibrated = true;
        self.cache = None;
        Ok(())
    }

    pub fn has_batch_norm(&self) -> bool {
        self.spec.nodes.iter().any(|n| n.kind == OperatorKind::Bn)
    }

    /// Class posteriors for a batch. Models without a final softmax have it
    /// applied to their output.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let out = self.forward(x)?;
        if self.ends_in_softmax() {
            Ok(out)
        } else {
            Ok(ops::softmax_last_axis(&out))
        }
    }

    /// Posterior of `class` for one sample and the gradient of its logarithm
    /// with respect to the sample.
    pub fn log_posterior_gradient(&self, sample: &Tensor, class: usize) -> Result<(f64, Tensor)> {
        if class >= self.output_width() {
            return Err(Error::invalid(format!(
                "class {class} outside output width {}",
                self.output_width()
            )));
        }
        let mut shape = vec![1];
        shape.extend_from_slice(&self.spec.input_shape);
        let x = sample.clone().reshape(shape)?;
        let cache = ForwardCache {
            activations: self.run(&x, None)?,
            input: x.clone(),
        };
        let logits_node = self.logits_node();
        let logits = match logits_node {
            Some(n) => cache.activations[n].clone().expect("computed"),
            None => x.clone(),
        };
        let mut p = logits.clone();
        ops::softmax_in_place(p.data_mut());
        let mut seed = p.map(|v| -v);
        seed.data_mut()[class] += 1.0;
        let g = self.backward_with(&cache, logits_node, &seed)?;
        let grad = g.input.reshape(sample.shape().to_vec())?;
        Ok((p.data()[class], grad))
    }

    /// Index of the first node (in execution order) of each weight-bearing
    /// layer: CONV and FC nodes.
    pub fn weight_layers(&self) -> Vec<usize> {
        self.topo
            .order
            .iter()
            .copied()
            .filter(|&i| {
                matches!(
                    self.spec.nodes[i].kind,
                    OperatorKind::Conv | OperatorKind::Fc
                )
            })
            .collect()
    }
}
