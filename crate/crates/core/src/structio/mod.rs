//! Structure input and atomic point-cloud graphs.
//!
//! A structure is read into a flat list of [`Atom`]s, turned into an
//! [`AtomicGraph`] whose edges join every pair of atoms closer than the
//! cutoff, and then specialised into a [`MaskedGraph`] (one residue's side
//! chain removed, its Cα marked as the prediction target) or a local
//! environment around one residue.

mod amino;
mod graph;
mod pdb;

pub use amino::{parse_sequence, sequence_string, AminoAcid, CODES};
pub use graph::{
    brute_force_edges, build_atomic_graph, build_atomic_graph_for_chain, extract_local_environment,
    mask_residue, AtomicGraph, Edge, GraphDump, MaskedGraph, NeighborGrid, DEFAULT_CUTOFF,
};
pub use pdb::{parse_structure, write_pdb, StructureFormat};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sequence position of a residue within its chain (1-based in the usual
/// case; structure numbering may contain zero or negative values).
pub type Position = i32;

/// Atom names kept when a residue is masked.
pub const BACKBONE_ATOMS: [&str; 4] = ["N", "CA", "C", "O"];

pub fn is_backbone(name: &str) -> bool {
    BACKBONE_ATOMS.contains(&name)
}

#[derive(Debug, Error)]
pub enum StructError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("structure contains no amino-acid atoms")]
    EmptyStructure,
    #[error("atom {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("cutoff must be positive, got {0}")]
    InvalidCutoff(f64),
    #[error("graph needs at least one atom")]
    NoAtoms,
    #[error("position {0} has no Cα in the graph")]
    UnknownPosition(Position),
    #[error("unknown amino acid '{0}'")]
    UnknownAminoAcid(String),
    #[error("duplicate Cα for chain {chain} residue {position}")]
    DuplicateCa { chain: char, position: Position },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub element: String,
    pub name: String,
    pub coords: [f64; 3],
    pub residue_index: Position,
    pub chain_id: char,
    pub residue_type: AminoAcid,
}

impl Atom {
    pub fn is_backbone(&self) -> bool {
        is_backbone(&self.name)
    }

    pub fn is_ca(&self) -> bool {
        self.name == "CA"
    }

    pub fn distance(&self, other: &Atom) -> f64 {
        distance(&self.coords, &other.coords)
    }
}

#[inline]
pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}
