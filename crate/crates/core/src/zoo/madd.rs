use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::ops::{OpParams, OperatorKind};
use crate::zoo::spec::{ArchitectureSpec, Source};

/// Multiplication counts per node and in total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MAddReport {
    pub per_node: BTreeMap<String, u64>,
    pub total: u64,
}

/// Multiplications performed by one node, given its per-sample input and
/// output shapes.
///
/// CONV counts `H_out·W_out·C_out·K·K·C_in`, FC counts `fan_in·fan_out`, BN
/// one per element; everything else is free.
pub fn node_madd(kind: OperatorKind, params: &OpParams, input: &[usize], output: &[usize]) -> u64 {
    let elems = |s: &[usize]| s.iter().product::<usize>() as u64;
    match (kind, params) {
        (OperatorKind::Conv, OpParams::Conv { kernel, .. }) => {
            let cin = input[2] as u64;
            elems(output) * (*kernel as u64) * (*kernel as u64) * cin
        }
        (OperatorKind::Fc, _) => elems(input) * elems(output),
        (OperatorKind::Bn, _) => elems(output),
        _ => 0,
    }
}

pub fn compute_madd(spec: &ArchitectureSpec) -> Result<MAddReport> {
    let topo = spec.validate()?;
    let mut per_node = BTreeMap::new();
    for (i, node) in spec.nodes.iter().enumerate() {
        let input = match topo.sources[i][0] {
            Source::Input => spec.input_shape.as_slice(),
            Source::Node(j) => topo.shapes[j].as_slice(),
        };
        per_node.insert(
            node.id.clone(),
            node_madd(node.kind, &node.params, input, &topo.shapes[i]),
        );
    }
    let total = per_node.values().sum();
    Ok(MAddReport { per_node, total })
}

/// Node kinds in execution order (ties by position in the node list).
pub fn operator_sequence(spec: &ArchitectureSpec) -> Result<Vec<OperatorKind>> {
    let topo = spec.validate()?;
    Ok(topo.order.iter().map(|&i| spec.nodes[i].kind).collect())
}
