use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{distance, AminoAcid, Atom, Position, StructError};

pub const DEFAULT_CUTOFF: f64 = 4.5;

/// Directed edge between two atoms; every edge has its reverse in the list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub distance: f64,
}

/// Point cloud of atoms joined by radius edges.
///
/// `ca_map` maps sequence positions of the graph's primary chain to the
/// node index of their Cα. Atoms from other chains take part in the edge
/// set but have no entry in `ca_map`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicGraph {
    pub atoms: Vec<Atom>,
    pub edges: Vec<Edge>,
    pub ca_map: BTreeMap<Position, usize>,
    pub cutoff: f64,
    pub chain: char,
}

/// An atomic graph with the side chain of one residue removed.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedGraph {
    pub base: AtomicGraph,
    pub target_node: usize,
    pub true_label: AminoAcid,
}

/// Uniform hash grid with cubic cells, used for fixed-radius neighbour search.
pub struct NeighborGrid {
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl NeighborGrid {
    pub fn new(points: &[[f64; 3]], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        NeighborGrid { cell, cells }
    }

    fn key(p: &[f64; 3], cell: f64) -> [i64; 3] {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    }

    /// Indices in the 27 cells around `p`; a superset of the points within one cell length.
    pub fn candidates<'a>(&'a self, p: &[f64; 3]) -> impl Iterator<Item = usize> + 'a {
        let [cx, cy, cz] = Self::key(p, self.cell);
        (-1..=1).flat_map(move |dx| {
            (-1..=1).flat_map(move |dy| {
                (-1..=1).flat_map(move |dz| {
                    self.cells
                        .get(&[cx + dx, cy + dy, cz + dz])
                        .map(|v| v.as_slice())
                        .unwrap_or(&[])
                        .iter()
                        .copied()
                })
            })
        })
    }
}

fn radius_edges(atoms: &[Atom], cutoff: f64) -> Vec<Edge> {
    let points: Vec<[f64; 3]> = atoms.iter().map(|a| a.coords).collect();
    let grid = NeighborGrid::new(&points, cutoff);
    let mut edges = Vec::new();
    for (i, p) in points.iter().enumerate() {
        for j in grid.candidates(p) {
            if j == i {
                continue;
            }
            let d = distance(p, &points[j]);
            if d < cutoff {
                edges.push(Edge {
                    src: i,
                    dst: j,
                    distance: d,
                });
            }
        }
    }
    edges.sort_unstable_by_key(|e| (e.src, e.dst));
    edges
}

/// All-pairs edge list, kept for cross-checking the grid search.
pub fn brute_force_edges(atoms: &[Atom], cutoff: f64) -> Vec<Edge> {
    let mut edges = Vec::new();
    for (i, a) in atoms.iter().enumerate() {
        for (j, b) in atoms.iter().enumerate() {
            if i != j {
                let d = distance(&a.coords, &b.coords);
                if d < cutoff {
                    edges.push(Edge {
                        src: i,
                        dst: j,
                        distance: d,
                    });
                }
            }
        }
    }
    edges
}

/// Builds the radius graph with the chain of the first atom as primary chain.
pub fn build_atomic_graph(atoms: Vec<Atom>, cutoff: f64) -> Result<AtomicGraph, StructError> {
    let chain = atoms.first().map(|a| a.chain_id).ok_or(StructError::NoAtoms)?;
    build_atomic_graph_for_chain(atoms, cutoff, chain)
}

pub fn build_atomic_graph_for_chain(
    atoms: Vec<Atom>,
    cutoff: f64,
    chain: char,
) -> Result<AtomicGraph, StructError> {
    if atoms.is_empty() {
        return Err(StructError::NoAtoms);
    }
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(StructError::InvalidCutoff(cutoff));
    }
    if let Some(index) = atoms
        .iter()
        .position(|a| a.coords.iter().any(|c| !c.is_finite()))
    {
        return Err(StructError::NonFinite { index });
    }
    let mut ca_map = BTreeMap::new();
    for (i, a) in atoms.iter().enumerate() {
        if a.is_ca() && a.chain_id == chain && ca_map.insert(a.residue_index, i).is_some() {
            return Err(StructError::DuplicateCa {
                chain,
                position: a.residue_index,
            });
        }
    }
    let edges = radius_edges(&atoms, cutoff);
    Ok(AtomicGraph {
        atoms,
        edges,
        ca_map,
        cutoff,
        chain,
    })
}

impl AtomicGraph {
    pub fn ca_node(&self, position: Position) -> Result<usize, StructError> {
        self.ca_map
            .get(&position)
            .copied()
            .ok_or(StructError::UnknownPosition(position))
    }

    pub fn positions(&self) -> impl Iterator<Item = Position> + '_ {
        self.ca_map.keys().copied()
    }

    /// Residue type at each mapped position, in position order.
    pub fn wildtype(&self) -> Vec<(Position, AminoAcid)> {
        self.ca_map
            .iter()
            .map(|(&p, &i)| (p, self.atoms[i].residue_type))
            .collect()
    }

    /// Largest pairwise atom distance.
    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, a) in self.atoms.iter().enumerate() {
            for b in &self.atoms[i + 1..] {
                best = best.max(a.distance(b));
            }
        }
        best
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump {
            cutoff: self.cutoff,
            chain: self.chain,
            atoms: self.atoms.clone(),
            edges: self.edges.iter().map(|e| (e.src, e.dst, e.distance)).collect(),
            ca_map: self.ca_map.clone(),
        }
    }
}

/// JSON form of a graph written by the `graph` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDump {
    pub cutoff: f64,
    pub chain: char,
    pub atoms: Vec<Atom>,
    pub edges: Vec<(usize, usize, f64)>,
    pub ca_map: BTreeMap<Position, usize>,
}

/// Removes the non-backbone atoms of the residue at `position` and marks its Cα.
pub fn mask_residue(graph: &AtomicGraph, position: Position) -> Result<MaskedGraph, StructError> {
    let ca = graph.ca_node(position)?;
    let true_label = graph.atoms[ca].residue_type;
    let chain = graph.chain;
    let atoms: Vec<Atom> = graph
        .atoms
        .iter()
        .filter(|a| !(a.chain_id == chain && a.residue_index == position && !a.is_backbone()))
        .cloned()
        .collect();
    let base = build_atomic_graph_for_chain(atoms, graph.cutoff, chain)?;
    let target_node = base.ca_node(position)?;
    Ok(MaskedGraph {
        base,
        target_node,
        true_label,
    })
}

/// Sub-point-cloud of atoms within `radius` (inclusive) of the Cα at `position`.
pub fn extract_local_environment(
    graph: &AtomicGraph,
    position: Position,
    radius: f64,
) -> Result<AtomicGraph, StructError> {
    if !(radius > 0.0) {
        return Err(StructError::InvalidCutoff(radius));
    }
    let center = graph.atoms[graph.ca_node(position)?].coords;
    let atoms: Vec<Atom> = graph
        .atoms
        .iter()
        .filter(|a| distance(&a.coords, &center) <= radius)
        .cloned()
        .collect();
    build_atomic_graph_for_chain(atoms, graph.cutoff, graph.chain)
}
