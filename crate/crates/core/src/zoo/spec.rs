use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{self, OpParams, OperatorKind, ParamDecl};

/// Name used by nodes to reference the graph input.
pub const INPUT: &str = "input";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub kind: OperatorKind,
    #[serde(default)]
    pub params: OpParams,
    pub inputs: Vec<String>,
}

impl NodeSpec {
    pub fn new(
        id: impl Into<String>,
        kind: OperatorKind,
        params: OpParams,
        inputs: &[&str],
    ) -> Self {
        Self {
            id: id.into(),
            kind,
            params,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A DAG of typed operator nodes. The node list may be in any order; the
/// execution order is derived topologically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub id: String,
    pub family: String,
    pub input_shape: Vec<usize>,
    pub class_count: usize,
    pub nodes: Vec<NodeSpec>,
}

/// Where a node reads one of its operands from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Node(usize),
}

/// Result of validating a spec: resolved edges, execution order and shapes.
#[derive(Debug, Clone)]
pub struct Topology {
    pub order: Vec<usize>,
    pub sources: Vec<Vec<Source>>,
    pub shapes: Vec<Vec<usize>>,
    pub params: Vec<Vec<ParamDecl>>,
    pub output: usize,
}

impl ArchitectureSpec {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::InvalidSpec {
            id: self.id.clone(),
            reason: reason.into(),
        }
    }

    pub fn validate(&self) -> Result<Topology> {
        if self.family.is_empty() {
            return Err(self.fail("family must be non-empty"));
        }
        if self.nodes.is_empty() {
            return Err(self.fail("no nodes"));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(self.fail(format!("bad input shape {:?}", self.input_shape)));
        }
        if self.class_count == 0 {
            return Err(self.fail("class_count must be positive"));
        }
        let mut index = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id == INPUT {
                return Err(self.fail(format!("node id '{INPUT}' is reserved")));
            }
            if index.insert(n.id.as_str(), i).is_some() {
                return Err(self.fail(format!("duplicate node id '{}'", n.id)));
            }
        }
        let mut sources = Vec::with_capacity(self.nodes.len());
        let mut consumers = vec![0usize; self.nodes.len()];
        let mut indegree = vec![0usize; self.nodes.len()];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if n.inputs.is_empty() {
                return Err(self.fail(format!("node '{}' has no inputs", n.id)));
            }
            let mut src = Vec::with_capacity(n.inputs.len());
            for name in &n.inputs {
                if name == INPUT {
                    src.push(Source::Input);
                } else {
                    let j = *index.get(name.as_str()).ok_or_else(|| {
                        self.fail(format!("node '{}' reads unknown node '{name}'", n.id))
                    })?;
                    src.push(Source::Node(j));
                    consumers[j] += 1;
                    indegree[i] += 1;
                    children[j].push(i);
                }
            }
            sources.push(src);
        }

        // Kahn's algorithm; ties resolved by position in the node list.
        let mut ready: BinaryHeap<Reverse<usize>> = (0..self.nodes.len())
            .filter(|&i| indegree[i] == 0)
            .map(Reverse)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(i)) = ready.pop() {
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(self.fail("node graph contains a cycle"));
        }

        let sinks: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| consumers[i] == 0)
            .collect();
        if sinks.len() != 1 {
            let names: Vec<&str> = sinks.iter().map(|&i| self.nodes[i].id.as_str()).collect();
            return Err(self.fail(format!("expected exactly one output node, found {names:?}")));
        }
        let output = sinks[0];

        let mut shapes: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        let mut params = vec![Vec::new(); self.nodes.len()];
        for &i in &order {
            let n = &self.nodes[i];
            let in_shapes: Vec<&[usize]> = sources[i]
                .iter()
                .map(|s| match s {
                    Source::Input => self.input_shape.as_slice(),
                    Source::Node(j) => shapes[*j].as_slice(),
                })
                .collect();
            let out = ops::infer_shape(n.kind, &n.params, &in_shapes).map_err(|e| match e {
                Error::Shape { kind, detail } => Error::Shape {
                    kind,
                    detail: format!("node '{}' of '{}': {detail}", n.id, self.id),
                },
                other => other,
            })?;
            params[i] = ops::param_shapes(n.kind, &n.params, in_shapes[0]);
            shapes[i] = out;
        }
        if shapes[output] != [self.class_count] {
            return Err(self.fail(format!(
                "output shape {:?} does not match class_count {}",
                shapes[output], self.class_count
            )));
        }
        Ok(Topology {
            order,
            sources,
            shapes,
            params,
            output,
        })
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }
}
