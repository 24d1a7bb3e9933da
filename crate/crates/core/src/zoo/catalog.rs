//! Built-in miniature architectures.
//!
//! Every entry is a template instantiated for an input shape and class count.

use crate::error::{Error, Result};
use crate::nn::ops::{OpParams, OperatorKind, Padding};
use crate::zoo::spec::{ArchitectureSpec, NodeSpec, INPUT};

/// `(id, family)` for every shipped template.
pub const ARCHITECTURES: &[(&str, &str)] = &[
    ("linear", "mini-mlp"),
    ("mlp-1", "mini-mlp"),
    ("mlp-2", "mini-mlp"),
    ("vgg-1", "mini-vgg"),
    ("vgg-2", "mini-vgg"),
    ("vgg-3", "mini-vgg"),
    ("resnet-1", "mini-resnet"),
    ("resnet-2", "mini-resnet"),
    ("dense-1", "mini-dense"),
    ("dense-2", "mini-dense"),
    ("gelu-vgg-1", "mini-gelu"),
    ("gelu-vgg-2", "mini-gelu"),
    ("student-cnn5", "mini-student"),
];

pub fn ids() -> impl Iterator<Item = &'static str> {
    ARCHITECTURES.iter().map(|(id, _)| *id)
}

pub fn family_of(id: &str) -> Option<&'static str> {
    ARCHITECTURES
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, f)| *f)
}

struct Builder {
    nodes: Vec<NodeSpec>,
    last: String,
}

impl Builder {
    fn new() -> Self {
        Self {
            nodes: Vec::new(),
            last: INPUT.to_string(),
        }
    }

    fn push(&mut self, kind: OperatorKind, params: OpParams, inputs: Vec<String>) -> String {
        let id = format!("{}{}", kind.name().to_ascii_lowercase(), self.nodes.len());
        self.nodes.push(NodeSpec {
            id: id.clone(),
            kind,
            params,
            inputs,
        });
        self.last = id.clone();
        id
    }

    fn then(&mut self, kind: OperatorKind, params: OpParams) -> String {
        let prev = self.last.clone();
        self.push(kind, params, vec![prev])
    }

    fn conv(&mut self, out_channels: usize, kernel: usize) -> String {
        self.then(
            OperatorKind::Conv,
            OpParams::Conv {
                out_channels,
                kernel,
                stride: 1,
                padding: Padding::Same,
            },
        )
    }

    fn fc(&mut self, units: usize) -> String {
        self.then(OperatorKind::Fc, OpParams::Fc { units })
    }

    fn act(&mut self, kind: OperatorKind) -> String {
        self.then(kind, OpParams::None)
    }

    fn maxpool(&mut self) -> String {
        self.then(OperatorKind::Maxpool, OpParams::Pool { size: 2, stride: 2 })
    }

    fn head(&mut self, classes: usize) {
        self.fc(classes);
        self.act(OperatorKind::Softmax);
    }
}

fn vgg(b: &mut Builder, depth: usize, activation: OperatorKind) {
    for block in 0..depth {
        let width = 8 << block;
        b.conv(width, 3);
        b.act(activation);
        b.conv(width, 3);
        b.act(activation);
        b.maxpool();
    }
    b.fc(32);
    b.act(activation);
}

fn resnet(b: &mut Builder, depth: usize) {
    b.conv(8, 3);
    b.act(OperatorKind::Bn);
    let mut skip = b.act(OperatorKind::Relu);
    for _ in 0..depth {
        b.conv(8, 3);
        b.act(OperatorKind::Bn);
        b.act(OperatorKind::Relu);
        b.conv(8, 3);
        let bn = b.act(OperatorKind::Bn);
        b.push(OperatorKind::Add, OpParams::None, vec![bn, skip]);
        skip = b.act(OperatorKind::Relu);
    }
    b.maxpool();
}

fn dense(b: &mut Builder, depth: usize) {
    b.conv(8, 3);
    b.act(OperatorKind::Relu);
    for _ in 0..depth {
        for _ in 0..2 {
            let block_in = b.last.clone();
            b.conv(4, 3);
            let r = b.act(OperatorKind::Relu);
            b.push(OperatorKind::Concat, OpParams::None, vec![block_in, r]);
        }
        b.maxpool();
    }
}

/// Instantiates a shipped template.
pub fn architecture(
    id: &str,
    input_shape: &[usize],
    class_count: usize,
) -> Result<ArchitectureSpec> {
    let family = family_of(id).ok_or_else(|| Error::NotFound {
        what: "architecture",
        id: id.to_string(),
    })?;
    let spatial = !family.starts_with("mini-mlp");
    if spatial && input_shape.len() != 3 {
        return Err(Error::InvalidSpec {
            id: id.to_string(),
            reason: format!("needs an [H, W, C] input, got {input_shape:?}"),
        });
    }
    let mut b = Builder::new();
    match id {
        "linear" => {}
        "mlp-1" => {
            b.fc(32);
            b.act(OperatorKind::Relu);
        }
        "mlp-2" => {
            b.fc(32);
            b.act(OperatorKind::Relu);
            b.fc(32);
            b.act(OperatorKind::Relu);
        }
        "vgg-1" => vgg(&mut b, 1, OperatorKind::Relu),
        "vgg-2" => vgg(&mut b, 2, OperatorKind::Relu),
        "vgg-3" => vgg(&mut b, 3, OperatorKind::Relu),
        "gelu-vgg-1" => vgg(&mut b, 1, OperatorKind::Gelu),
        "gelu-vgg-2" => vgg(&mut b, 2, OperatorKind::Gelu),
        "resnet-1" => resnet(&mut b, 1),
        "resnet-2" => resnet(&mut b, 2),
        "dense-1" => dense(&mut b, 1),
        "dense-2" => dense(&mut b, 2),
        "student-cnn5" => {
            b.conv(8, 3);
            b.act(OperatorKind::Relu);
            b.maxpool();
            b.conv(16, 3);
            b.act(OperatorKind::Relu);
            b.conv(16, 3);
            b.act(OperatorKind::Relu);
            b.maxpool();
            b.fc(32);
            b.act(OperatorKind::Relu);
        }
        _ => unreachable!("listed architecture {id}"),
    }
    b.head(class_count);
    let spec = ArchitectureSpec {
        id: id.to_string(),
        family: family.to_string(),
        input_shape: input_shape.to_vec(),
        class_count,
        nodes: b.nodes,
    };
    spec.validate()?;
    Ok(spec)
}

/// Every template that accepts the given input shape.
pub fn catalog(input_shape: &[usize], class_count: usize) -> Vec<ArchitectureSpec> {
    ids()
        .filter_map(|id| architecture(id, input_shape, class_count).ok())
        .collect()
}
