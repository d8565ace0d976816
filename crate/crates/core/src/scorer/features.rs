use super::tape::Tensor;
use super::{FeatureSpec, ScorerError};
use crate::structio::{MaskedGraph, DEFAULT_CUTOFF};

/// Element classes with their own one-hot slot; anything else shares a final slot.
pub const ELEMENT_CLASSES: [&str; 4] = ["C", "N", "O", "S"];

/// One-hot element (5) + backbone flag + target flag.
pub const NODE_INPUT_DIM: usize = ELEMENT_CLASSES.len() + 3;

/// Raw per-node and per-edge inputs of one masked graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub node_scalars: Tensor,
    pub node_vectors: Tensor,
    pub edge_scalars: Tensor,
    pub edge_vectors: Tensor,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub target: usize,
}

impl Features {
    pub fn num_nodes(&self) -> usize {
        self.node_scalars.rows
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }
}

/// Gaussian radial basis with `count` centres evenly spaced on [0, 4.5] Å.
pub fn rbf_expand(distance: f64, count: usize) -> Vec<f64> {
    let max = DEFAULT_CUTOFF;
    let width = max / count as f64;
    (0..count)
        .map(|k| {
            let center = if count > 1 { max * k as f64 / (count - 1) as f64 } else { 0.0 };
            let z = (distance - center) / width;
            (-z * z).exp()
        })
        .collect()
}

fn element_slot(element: &str) -> usize {
    ELEMENT_CLASSES
        .iter()
        .position(|&e| e == element)
        .unwrap_or(ELEMENT_CLASSES.len())
}

/// Node inputs are one-hot element classes plus backbone/target flags (the
/// learned projection to `node_scalar_dim` channels is the first layer of the
/// network); node vectors start at zero; edges carry radial-basis distances
/// and unit vectors pointing from the receiving atom to the sending atom.
pub fn featurize(masked: &MaskedGraph, spec: &FeatureSpec) -> Result<Features, ScorerError> {
    spec.validate()?;
    let graph = &masked.base;
    let n = graph.atoms.len();
    if n == 0 {
        return Err(ScorerError::EmptyGraph);
    }
    if masked.target_node >= n {
        return Err(ScorerError::Config(format!("target node {} out of range", masked.target_node)));
    }
    let mut node_scalars = Tensor::zeros(n, NODE_INPUT_DIM);
    for (i, atom) in graph.atoms.iter().enumerate() {
        let row = &mut node_scalars.data[i * NODE_INPUT_DIM..(i + 1) * NODE_INPUT_DIM];
        row[element_slot(&atom.element)] = 1.0;
        if atom.is_backbone() {
            row[ELEMENT_CLASSES.len() + 1] = 1.0;
        }
        if i == masked.target_node {
            row[ELEMENT_CLASSES.len() + 2] = 1.0;
        }
    }

    let e = graph.edges.len();
    let m = spec.edge_scalar_dim;
    let eta = spec.edge_vector_dim;
    let mut edge_scalars = Tensor::zeros(e, m);
    let mut edge_vectors = Tensor::zeros(e, 3 * eta);
    let mut src = Vec::with_capacity(e);
    let mut dst = Vec::with_capacity(e);
    for (k, edge) in graph.edges.iter().enumerate() {
        edge_scalars.data[k * m..(k + 1) * m].copy_from_slice(&rbf_expand(edge.distance, m));
        let a = graph.atoms[edge.src].coords;
        let b = graph.atoms[edge.dst].coords;
        for c in 0..3 {
            let u = (a[c] - b[c]) / edge.distance;
            for ch in 0..eta {
                edge_vectors.data[k * 3 * eta + c * eta + ch] = u;
            }
        }
        src.push(edge.src);
        dst.push(edge.dst);
    }

    Ok(Features {
        node_scalars,
        node_vectors: Tensor::zeros(n, 3 * spec.node_vector_dim),
        edge_scalars,
        edge_vectors,
        src,
        dst,
        target: masked.target_node,
    })
}
