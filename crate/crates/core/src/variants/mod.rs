//! Per-position amino-acid scores and mutation rankings.
//!
//! A [`ScoreMatrix`] holds one row of 20 scores per residue, obtained by
//! masking that residue and running the scorer. Candidate mutations are the
//! assay-measured substitutions at scored positions; positions whose top
//! score is not the wildtype residue can be dropped. Two rankings exist:
//! global (score descending) and positional (least confident wildtype
//! positions first, at most three mutants per position).

mod matrix;
mod ranking;

pub use matrix::{score_structure, EnvironmentMode, MatrixProvenance, ScoreMatrix};
pub use ranking::{
    generate_mutations, rank, rank_global, rank_positional, read_ranked_tsv, write_ranked_tsv, Candidate,
    RankedMutation, Strategy, POSITIONAL_TOP_K,
};

use thiserror::Error;

use crate::scorer::ScorerError;
use crate::structio::{Position, StructError};

#[derive(Debug, Error)]
pub enum VariantError {
    #[error("assay and structure disagree on the wildtype residue at positions {positions:?}")]
    Alignment { positions: Vec<Position> },
    #[error("structure has no mapped residues")]
    EmptyStructure,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid score matrix: {0}")]
    Invalid(String),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Structure(#[from] StructError),
}
