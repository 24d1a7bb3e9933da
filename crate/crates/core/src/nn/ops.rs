//! Operator kinds and their batched forward/backward kernels.
//!
//! Spatial tensors are laid out `[N, H, W, C]`. Shapes passed to
//! [`infer_shape`] and [`param_shapes`] are per-sample (no batch dimension).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OperatorKind {
    Conv,
    Fc,
    Relu,
    Gelu,
    Bn,
    Maxpool,
    Avgpool,
    Add,
    Concat,
    Softmax,
    Flatten,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 11] = [
        OperatorKind::Conv,
        OperatorKind::Fc,
        OperatorKind::Relu,
        OperatorKind::Gelu,
        OperatorKind::Bn,
        OperatorKind::Maxpool,
        OperatorKind::Avgpool,
        OperatorKind::Add,
        OperatorKind::Concat,
        OperatorKind::Softmax,
        OperatorKind::Flatten,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperatorKind::Conv => "CONV",
            OperatorKind::Fc => "FC",
            OperatorKind::Relu => "RELU",
            OperatorKind::Gelu => "GELU",
            OperatorKind::Bn => "BN",
            OperatorKind::Maxpool => "MAXPOOL",
            OperatorKind::Avgpool => "AVGPOOL",
            OperatorKind::Add => "ADD",
            OperatorKind::Concat => "CONCAT",
            OperatorKind::Softmax => "SOFTMAX",
            OperatorKind::Flatten => "FLATTEN",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn has_parameters(self) -> bool {
        matches!(
            self,
            OperatorKind::Conv | OperatorKind::Fc | OperatorKind::Bn
        )
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Same,
    Valid,
}

/// Hyper-parameters attached to a node. Kinds without hyper-parameters use
/// [`OpParams::None`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OpParams {
    #[default]
    None,
    Conv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "same")]
        padding: Padding,
    },
    Fc {
        units: usize,
    },
    Pool {
        size: usize,
        #[serde(default = "two")]
        stride: usize,
    },
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn same() -> Padding {
    Padding::Same
}

pub const BN_EPS: f64 = 1e-5;

/// Declared parameter tensor of a node.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub fan_in: usize,
    pub fan_out: usize,
}

fn conv_geometry(h: usize, k: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    let pad = match padding {
        Padding::Same => (k - 1) / 2,
        Padding::Valid => 0,
    };
    if h + 2 * pad < k {
        return None;
    }
    Some(((h + 2 * pad - k) / stride + 1, pad))
}

fn fmt_shapes(shapes: &[&[usize]]) -> String {
    shapes
        .iter()
        .map(|s| format!("{s:?}"))
        .collect::<Vec<_>>()
        .join(" and ")
}

/// Derives the per-sample output shape of a node.
pub fn infer_shape(
    kind: OperatorKind,
    params: &OpParams,
    inputs: &[&[usize]],
) -> Result<Vec<usize>> {
    use OperatorKind::*;
    let unary = matches!(
        kind,
        Conv | Fc | Relu | Gelu | Bn | Maxpool | Avgpool | Softmax | Flatten
    );
    if unary && inputs.len() != 1 {
        return Err(Error::shape(
            kind,
            format!("expects one input, got {}", inputs.len()),
        ));
    }
    if !unary && inputs.len() < 2 {
        return Err(Error::shape(
            kind,
            format!("expects at least two inputs, got {}", inputs.len()),
        ));
    }
    let x = inputs[0];
    match (kind, params) {
        (
            Conv,
            OpParams::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            },
        ) => {
            if x.len() != 3 {
                return Err(Error::shape(
                    kind,
                    format!("needs [H, W, C] input, got {x:?}"),
                ));
            }
            if *kernel == 0 || *stride == 0 || *out_channels == 0 {
                return Err(Error::shape(
                    kind,
                    "kernel, stride and out_channels must be positive",
                ));
            }
            if *padding == Padding::Same && kernel % 2 == 0 {
                return Err(Error::shape(kind, "same padding needs an odd kernel"));
            }
            let (ho, _) = conv_geometry(x[0], *kernel, *stride, *padding).ok_or_else(|| {
                Error::shape(kind, format!("kernel {kernel} larger than input {x:?}"))
            })?;
            let (wo, _) = conv_geometry(x[1], *kernel, *stride, *padding).ok_or_else(|| {
                Error::shape(kind, format!("kernel {kernel} larger than input {x:?}"))
            })?;
            Ok(vec![ho, wo, *out_channels])
        }
        (Fc, OpParams::Fc { units }) => {
            if *units == 0 {
                return Err(Error::shape(kind, "units must be positive"));
            }
            Ok(vec![*units])
        }
        (Maxpool | Avgpool, OpParams::Pool { size, stride }) => {
            if x.len() != 3 {
                return Err(Error::shape(
                    kind,
                    format!("needs [H, W, C] input, got {x:?}"),
                ));
            }
            if *size == 0 || *stride == 0 || x[0] < *size || x[1] < *size {
                return Err(Error::shape(
                    kind,
                    format!("window {size} does not fit input {x:?}"),
                ));
            }
            Ok(vec![
                (x[0] - size) / stride + 1,
                (x[1] - size) / stride + 1,
                x[2],
            ])
        }
        (Relu | Gelu | Bn | Softmax, OpParams::None) => Ok(x.to_vec()),
        (Flatten, OpParams::None) => Ok(vec![x.iter().product()]),
        (Add, OpParams::None) => {
            if inputs.iter().any(|s| *s != x) {
                return Err(Error::shape(
                    kind,
                    format!("operand shapes differ: {}", fmt_shapes(inputs)),
                ));
            }
            Ok(x.to_vec())
        }
        (Concat, OpParams::None) => {
            let rank = x.len();
            let lead = &x[..rank - 1];
            if inputs
                .iter()
                .any(|s| s.len() != rank || &s[..rank - 1] != lead)
            {
                return Err(Error::shape(
                    kind,
                    format!(
                        "operands disagree outside the channel axis: {}",
                        fmt_shapes(inputs)
                    ),
                ));
            }
            let mut out = lead.to_vec();
            out.push(inputs.iter().map(|s| s[rank - 1]).sum());
            Ok(out)
        }
        (k, p) => Err(Error::shape(
            k,
            format!("parameters {p:?} do not apply to {k}"),
        )),
    }
}

/// Parameter tensors of a node in declared order.
pub fn param_shapes(kind: OperatorKind, params: &OpParams, input: &[usize]) -> Vec<ParamDecl> {
    match (kind, params) {
        (
            OperatorKind::Conv,
            OpParams::Conv {
                out_channels,
                kernel,
                ..
            },
        ) => {
            let cin = input[2];
            vec![
                ParamDecl {
                    name: "weight",
                    shape: vec![*kernel, *kernel, cin, *out_channels],
                    trainable: true,
                    fan_in: kernel * kernel * cin,
                    fan_out: kernel * kernel * out_channels,
                },
                ParamDecl {
                    name: "bias",
                    shape: vec![*out_channels],
                    trainable: true,
                    fan_in: 0,
                    fan_out: 0,
                },
            ]
        }
        (OperatorKind::Fc, OpParams::Fc { units }) => {
            let fan_in: usize = input.iter().product();
            vec![
                ParamDecl {
                    name: "weight",
                    shape: vec![fan_in, *units],
                    trainable: true,
                    fan_in,
                    fan_out: *units,
                },
                ParamDecl {
                    name: "bias",
                    shape: vec![*units],
                    trainable: true,
                    fan_in: 0,
                    fan_out: 0,
                },
            ]
        }
        (OperatorKind::Bn, _) => {
            let c = *input.last().unwrap();
            ["gamma", "beta", "running_mean", "running_var"]
                .into_iter()
                .enumerate()
                .map(|(i, name)| ParamDecl {
                    name,
                    shape: vec![c],
                    trainable: i < 2,
                    fan_in: 0,
                    fan_out: 0,
                })
                .collect()
        }
        _ => Vec::new(),
    }
}

/// Batched forward kernel. `out_shape` is the per-sample output shape.
pub fn forward(
    kind: OperatorKind,
    params: &OpParams,
    weights: &[Tensor],
    inputs: &[&Tensor],
    out_shape: &[usize],
) -> Tensor {
    let n = inputs[0].batch();
    let mut shape = vec![n];
    shape.extend_from_slice(out_shape);
    let x = inputs[0];
    match (kind, params) {
        (
            OperatorKind::Conv,
            OpParams::Conv {
                kernel,
                stride,
                padding,
                ..
            },
        ) => conv_forward(
            x,
            &weights[0],
            &weights[1],
            *kernel,
            *stride,
            *padding,
            shape,
        ),
        (OperatorKind::Fc, _) => fc_forward(x, &weights[0], &weights[1], shape),
        (OperatorKind::Relu, _) => x.map(|v| v.max(0.0)),
        (OperatorKind::Gelu, _) => x.map(gelu),
        (OperatorKind::Bn, _) => {
            let (gamma, beta, mean, var) = (&weights[0], &weights[1], &weights[2], &weights[3]);
            let c = gamma.len();
            let mut out = x.clone();
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                let ch = i % c;
                let inv = 1.0 / (var.data()[ch] + BN_EPS).sqrt();
                *v = gamma.data()[ch] * (*v - mean.data()[ch]) * inv + beta.data()[ch];
            }
            out
        }
        (OperatorKind::Maxpool | OperatorKind::Avgpool, OpParams::Pool { size, stride }) => {
            pool_forward(kind, x, *size, *stride, shape)
        }
        (OperatorKind::Add, _) => {
            let mut out = x.clone();
            for other in &inputs[1..] {
                for (o, v) in out.data_mut().iter_mut().zip(other.data()) {
                    *o += v;
                }
            }
            out
        }
        (OperatorKind::Concat, _) => concat_forward(inputs, shape),
        (OperatorKind::Softmax, _) => softmax_last_axis(x),
        (OperatorKind::Flatten, _) => Tensor::new(shape, x.data().to_vec()).expect("flatten shape"),
        _ => unreachable!("validated node {kind} with {params:?}"),
    }
}

/// Gradients produced by one node's backward step.
pub struct NodeGrads {
    pub inputs: Vec<Tensor>,
    pub params: Vec<Tensor>,
}

/// Batched backward kernel for one node.
pub fn backward(
    kind: OperatorKind,
    params: &OpParams,
    weights: &[Tensor],
    inputs: &[&Tensor],
    output: &Tensor,
    grad_out: &Tensor,
) -> NodeGrads {
    let x = inputs[0];
    match (kind, params) {
        (
            OperatorKind::Conv,
            OpParams::Conv {
                kernel,
                stride,
                padding,
                ..
            },
        ) => {
            let (dx, dw, db) = conv_backward(x, &weights[0], grad_out, *kernel, *stride, *padding);
            NodeGrads {
                inputs: vec![dx],
                params: vec![dw, db],
            }
        }
        (OperatorKind::Fc, _) => {
            let (dx, dw, db) = fc_backward(x, &weights[0], grad_out);
            NodeGrads {
                inputs: vec![dx],
                params: vec![dw, db],
            }
        }
        (OperatorKind::Relu, _) => {
            let mut dx = grad_out.clone();
            for (g, v) in dx.data_mut().iter_mut().zip(x.data()) {
                if *v <= 0.0 {
                    *g = 0.0;
                }
            }
            NodeGrads {
                inputs: vec![dx],
                params: vec![],
            }
        }
        (OperatorKind::Gelu, _) => {
            let mut dx = grad_out.clone();
            for (g, v) in dx.data_mut().iter_mut().zip(x.data()) {
                *g *= gelu_derivative(*v);
            }
            NodeGrads {
                inputs: vec![dx],
                params: vec![],
            }
        }
        (OperatorKind::Bn, _) => {
            let (gamma, mean, var) = (&weights[0], &weights[2], &weights[3]);
            let c = gamma.len();
            let mut dgamma = Tensor::zeros(vec![c]);
            let mut dbeta = Tensor::zeros(vec![c]);
            let mut dx = grad_out.clone();
            for (i, g) in dx.data_mut().iter_mut().enumerate() {
                let ch = i % c;
                let inv = 1.0 / (var.data()[ch] + BN_EPS).sqrt();
                let xhat = (x.data()[i] - mean.data()[ch]) * inv;
                dgamma.data_mut()[ch] += *g * xhat;
                dbeta.data_mut()[ch] += *g;
                *g *= gamma.data()[ch] * inv;
            }
            NodeGrads {
                inputs: vec![dx],
                params: vec![
                    dgamma,
                    dbeta,
                    Tensor::zeros(vec![c]),
                    Tensor::zeros(vec![c]),
                ],
            }
        }
        (OperatorKind::Maxpool | OperatorKind::Avgpool, OpParams::Pool { size, stride }) => {
            NodeGrads {
                inputs: vec![pool_backward(kind, x, grad_out, *size, *stride)],
                params: vec![],
            }
        }
        (OperatorKind::Add, _) => NodeGrads {
            inputs: inputs.iter().map(|_| grad_out.clone()).collect(),
            params: vec![],
        },
        (OperatorKind::Concat, _) => NodeGrads {
            inputs: concat_backward(inputs, grad_out),
            params: vec![],
        },
        (OperatorKind::Softmax, _) => {
            let k = *output.shape().last().unwrap();
            let mut dx = grad_out.clone();
            for (dxr, pr) in dx.data_mut().chunks_mut(k).zip(output.data().chunks(k)) {
                let s: f64 = dxr.iter().zip(pr).map(|(g, p)| g * p).sum();
                for (g, p) in dxr.iter_mut().zip(pr) {
                    *g = p * (*g - s);
                }
            }
            NodeGrads {
                inputs: vec![dx],
                params: vec![],
            }
        }
        (OperatorKind::Flatten, _) => NodeGrads {
            inputs: vec![
                Tensor::new(x.shape().to_vec(), grad_out.data().to_vec()).expect("flatten grad")
            ],
            params: vec![],
        },
        _ => unreachable!("validated node {kind} with {params:?}"),
    }
}

const GELU_C: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    let s = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (s * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let s = (2.0 / std::f64::consts::PI).sqrt();
    let t = (s * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * s * (1.0 + 3.0 * GELU_C * x * x)
}

pub fn softmax_last_axis(x: &Tensor) -> Tensor {
    let k = *x.shape().last().unwrap();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(k) {
        softmax_in_place(row);
    }
    out
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
}

fn dims4(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    (s[0], s[1], s[2], s[3])
}

fn conv_forward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    k: usize,
    stride: usize,
    padding: Padding,
    out_shape: Vec<usize>,
) -> Tensor {
    let (n, h, wd, c) = dims4(x);
    let (ho, wo, co) = (out_shape[1], out_shape[2], out_shape[3]);
    let pad = if padding == Padding::Same {
        (k - 1) / 2
    } else {
        0
    };
    let mut out = Tensor::zeros(out_shape);
    let (xd, wdat, bd) = (x.data(), w.data(), b.data());
    let od = out.data_mut();
    for ni in 0..n {
        for oh in 0..ho {
            for ow in 0..wo {
                let obase = ((ni * ho + oh) * wo + ow) * co;
                let acc = &mut od[obase..obase + co];
                acc.copy_from_slice(bd);
                for kh in 0..k {
                    let ih = (oh * stride + kh) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for kw in 0..k {
                        let iw = (ow * stride + kw) as isize - pad as isize;
                        if iw < 0 || iw >= wd as isize {
                            continue;
                        }
                        let xbase = ((ni * h + ih as usize) * wd + iw as usize) * c;
                        for ci in 0..c {
                            let xv = xd[xbase + ci];
                            let wbase = ((kh * k + kw) * c + ci) * co;
                            for (a, wv) in acc.iter_mut().zip(&wdat[wbase..wbase + co]) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    k: usize,
    stride: usize,
    padding: Padding,
) -> (Tensor, Tensor, Tensor) {
    let (n, h, wd, c) = dims4(x);
    let (_, ho, wo, co) = dims4(dy);
    let pad = if padding == Padding::Same {
        (k - 1) / 2
    } else {
        0
    };
    let mut dx = Tensor::zeros(x.shape().to_vec());
    let mut dw = Tensor::zeros(w.shape().to_vec());
    let mut db = Tensor::zeros(vec![co]);
    let (xd, wdat, dyd) = (x.data(), w.data(), dy.data());
    for ni in 0..n {
        for oh in 0..ho {
            for ow in 0..wo {
                let obase = ((ni * ho + oh) * wo + ow) * co;
                let g = &dyd[obase..obase + co];
                for (d, gv) in db.data_mut().iter_mut().zip(g) {
                    *d += gv;
                }
                for kh in 0..k {
                    let ih = (oh * stride + kh) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for kw in 0..k {
                        let iw = (ow * stride + kw) as isize - pad as isize;
                        if iw < 0 || iw >= wd as isize {
                            continue;
                        }
                        let xbase = ((ni * h + ih as usize) * wd + iw as usize) * c;
                        for ci in 0..c {
                            let xv = xd[xbase + ci];
                            let wbase = ((kh * k + kw) * c + ci) * co;
                            let wrow = &wdat[wbase..wbase + co];
                            let dwrow = &mut dw.data_mut()[wbase..wbase + co];
                            let mut acc = 0.0;
                            for o in 0..co {
                                dwrow[o] += xv * g[o];
                                acc += wrow[o] * g[o];
                            }
                            dx.data_mut()[xbase + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

fn fc_forward(x: &Tensor, w: &Tensor, b: &Tensor, out_shape: Vec<usize>) -> Tensor {
    let n = x.batch();
    let d = x.row_len();
    let u = b.len();
    let mut out = Tensor::zeros(out_shape);
    let wd = w.data();
    for i in 0..n {
        let xr = x.row(i);
        let orow = &mut out.data_mut()[i * u..(i + 1) * u];
        orow.copy_from_slice(b.data());
        for j in 0..d {
            let xv = xr[j];
            if xv == 0.0 {
                continue;
            }
            for (o, wv) in orow.iter_mut().zip(&wd[j * u..(j + 1) * u]) {
                *o += xv * wv;
            }
        }
    }
    out
}

fn fc_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Tensor) {
    let n = x.batch();
    let d = x.row_len();
    let u = dy.row_len();
    let mut dx = Tensor::zeros(x.shape().to_vec());
    let mut dw = Tensor::zeros(w.shape().to_vec());
    let mut db = Tensor::zeros(vec![u]);
    let wd = w.data();
    for i in 0..n {
        let g = dy.row(i);
        for (a, gv) in db.data_mut().iter_mut().zip(g) {
            *a += gv;
        }
        let xr = x.row(i);
        let dxr = dx.row_mut(i);
        for j in 0..d {
            let wrow = &wd[j * u..(j + 1) * u];
            dxr[j] = wrow.iter().zip(g).map(|(a, b)| a * b).sum();
        }
        let dwd = dw.data_mut();
        for j in 0..d {
            let xv = xr[j];
            if xv == 0.0 {
                continue;
            }
            for (a, gv) in dwd[j * u..(j + 1) * u].iter_mut().zip(g) {
                *a += xv * gv;
            }
        }
    }
    (dx, dw, db)
}

/// Row-major first index of the window maximum.
fn window_argmax(
    xd: &[f64],
    ni: usize,
    oh: usize,
    ow: usize,
    ch: usize,
    dims: (usize, usize, usize),
    size: usize,
    stride: usize,
) -> usize {
    let (h, w, c) = dims;
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for kh in 0..size {
        for kw in 0..size {
            let idx = ((ni * h + oh * stride + kh) * w + ow * stride + kw) * c + ch;
            if best == usize::MAX || xd[idx] > best_v {
                best = idx;
                best_v = xd[idx];
            }
        }
    }
    best
}

fn pool_forward(
    kind: OperatorKind,
    x: &Tensor,
    size: usize,
    stride: usize,
    out_shape: Vec<usize>,
) -> Tensor {
    let (n, h, w, c) = dims4(x);
    let (ho, wo) = (out_shape[1], out_shape[2]);
    let mut out = Tensor::zeros(out_shape);
    let xd = x.data();
    let norm = 1.0 / (size * size) as f64;
    let od = out.data_mut();
    for ni in 0..n {
        for oh in 0..ho {
            for ow in 0..wo {
                for ch in 0..c {
                    let o = ((ni * ho + oh) * wo + ow) * c + ch;
                    od[o] = if kind == OperatorKind::Maxpool {
                        xd[window_argmax(xd, ni, oh, ow, ch, (h, w, c), size, stride)]
                    } else {
                        let mut s = 0.0;
                        for kh in 0..size {
                            for kw in 0..size {
                                s += xd
                                    [((ni * h + oh * stride + kh) * w + ow * stride + kw) * c + ch];
                            }
                        }
                        s * norm
                    };
                }
            }
        }
    }
    out
}

fn pool_backward(
    kind: OperatorKind,
    x: &Tensor,
    dy: &Tensor,
    size: usize,
    stride: usize,
) -> Tensor {
    let (n, h, w, c) = dims4(x);
    let (_, ho, wo, _) = dims4(dy);
    let mut dx = Tensor::zeros(x.shape().to_vec());
    let xd = x.data();
    let norm = 1.0 / (size * size) as f64;
    for ni in 0..n {
        for oh in 0..ho {
            for ow in 0..wo {
                for ch in 0..c {
                    let g = dy.data()[((ni * ho + oh) * wo + ow) * c + ch];
                    if kind == OperatorKind::Maxpool {
                        let idx = window_argmax(xd, ni, oh, ow, ch, (h, w, c), size, stride);
                        dx.data_mut()[idx] += g;
                    } else {
                        for kh in 0..size {
                            for kw in 0..size {
                                dx.data_mut()[((ni * h + oh * stride + kh) * w
                                    + ow * stride
                                    + kw)
                                    * c
                                    + ch] += g * norm;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

fn concat_forward(inputs: &[&Tensor], out_shape: Vec<usize>) -> Tensor {
    let total = *out_shape.last().unwrap();
    let mut out = Tensor::zeros(out_shape);
    let positions = out.len() / total;
    let mut offset = 0;
    for t in inputs {
        let ci = *t.shape().last().unwrap();
        for p in 0..positions {
            out.data_mut()[p * total + offset..p * total + offset + ci]
                .copy_from_slice(&t.data()[p * ci..(p + 1) * ci]);
        }
        offset += ci;
    }
    out
}

fn concat_backward(inputs: &[&Tensor], dy: &Tensor) -> Vec<Tensor> {
    let total = *dy.shape().last().unwrap();
    let positions = dy.len() / total;
    let mut offset = 0;
    let mut grads = Vec::with_capacity(inputs.len());
    for t in inputs {
        let ci = *t.shape().last().unwrap();
        let mut g = Tensor::zeros(t.shape().to_vec());
        for p in 0..positions {
            g.data_mut()[p * ci..(p + 1) * ci]
                .copy_from_slice(&dy.data()[p * total + offset..p * total + offset + ci]);
        }
        offset += ci;
        grads.push(g);
    }
    grads
}
