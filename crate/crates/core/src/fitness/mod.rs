//! Fitness regression on sequence embeddings augmented with the scorer's
//! per-mutation score, and the learning-curve protocol used to compare it
//! with the unaugmented baseline.

mod aaindex;
mod curve;
mod ridge;

pub use aaindex::{read_aaindex_csv, reduce_aaindex, AaIndexTable, AAINDEX_DIM};
pub use curve::{
    learning_curve, read_score_file, CurveAggregate, CurveConfig, CurveMetric, CurvePoint, LearningCurve, ModelVariant,
};
pub use ridge::{ridge_fit, RidgeModel};

use thiserror::Error;

use crate::structio::{AminoAcid, Position};

#[derive(Debug, Error)]
pub enum FitnessError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("singular system: {0}; use a positive regularization strength")]
    Singular(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("assay {assay}: training size {size} exceeds the {available} available training rows")]
    SizeTooLarge { assay: String, size: usize, available: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Per-residue encoding of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingKind {
    OneHot,
    AaIndex(AaIndexTable),
}

impl EmbeddingKind {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingKind::OneHot => AminoAcid::COUNT,
            EmbeddingKind::AaIndex(_) => AAINDEX_DIM,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EmbeddingKind::OneHot => "one_hot",
            EmbeddingKind::AaIndex(_) => "aa_index",
        }
    }

    fn write_residue(&self, aa: AminoAcid, out: &mut [f64]) {
        match self {
            EmbeddingKind::OneHot => {
                out.iter_mut().for_each(|x| *x = 0.0);
                out[aa.index()] = 1.0;
            }
            EmbeddingKind::AaIndex(table) => out.copy_from_slice(&table.rows[aa.index()]),
        }
    }
}

/// Embeds the wildtype sequence carrying the substitution `mutant` at the
/// 1-based `position`, flattened in position order, with `score` appended.
pub fn embed(
    wildtype: &[AminoAcid],
    position: Position,
    mutant: AminoAcid,
    kind: &EmbeddingKind,
    score: f64,
) -> Result<Vec<f64>, FitnessError> {
    let n = wildtype.len();
    let i = usize::try_from(position - 1)
        .ok()
        .filter(|&i| i < n)
        .ok_or_else(|| FitnessError::Invalid(format!("position {position} outside 1..={n}")))?;
    if wildtype[i] == mutant {
        return Err(FitnessError::Invalid(format!("{mutant}{position}{mutant} is not a substitution")));
    }
    let d = kind.dim();
    let mut out = vec![0.0; d * n + 1];
    for (k, &aa) in wildtype.iter().enumerate() {
        let aa = if k == i { mutant } else { aa };
        kind.write_residue(aa, &mut out[k * d..(k + 1) * d]);
    }
    out[d * n] = score;
    Ok(out)
}
