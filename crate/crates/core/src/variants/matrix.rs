use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::VariantError;
use crate::scorer::{forward, ScoreVector, ScorerParams};
use crate::structio::{extract_local_environment, mask_residue, AminoAcid, AtomicGraph, Position, CODES};

/// Which atoms the scorer sees for each masked residue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EnvironmentMode {
    #[default]
    Full,
    Local { radius: f64 },
}

impl std::fmt::Display for EnvironmentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnvironmentMode::Full => f.write_str("full"),
            EnvironmentMode::Local { radius } => write!(f, "local:{radius}"),
        }
    }
}

impl std::str::FromStr for EnvironmentMode {
    type Err = String;

    /// `full` or `local:<radius>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "full" => Ok(EnvironmentMode::Full),
            other => {
                let radius = other
                    .strip_prefix("local:")
                    .and_then(|r| r.parse::<f64>().ok())
                    .filter(|r| *r > 0.0)
                    .ok_or_else(|| format!("expected 'full' or 'local:<radius>', got '{other}'"))?;
                Ok(EnvironmentMode::Local { radius })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MatrixProvenance {
    pub checkpoint_id: Option<String>,
    pub structure_id: Option<String>,
    pub environment: EnvironmentMode,
}

/// Scores S(i, a) for every mapped position i, in ascending position order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    positions: Vec<Position>,
    wildtype: Vec<AminoAcid>,
    scores: Vec<[f64; 20]>,
    index: HashMap<Position, usize>,
    pub provenance: MatrixProvenance,
}

impl ScoreMatrix {
    /// Rows are reordered by ascending position; positions must be unique.
    pub fn new(rows: Vec<(Position, AminoAcid, [f64; 20])>, provenance: MatrixProvenance) -> Result<Self, VariantError> {
        let mut rows = rows;
        rows.sort_by_key(|r| r.0);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(VariantError::Invalid(format!("position {} appears twice", w[0].0)));
        }
        if let Some(r) = rows.iter().find(|r| r.2.iter().any(|s| !s.is_finite())) {
            return Err(VariantError::Invalid(format!("non-finite score at position {}", r.0)));
        }
        let index = rows.iter().enumerate().map(|(k, r)| (r.0, k)).collect();
        Ok(ScoreMatrix {
            positions: rows.iter().map(|r| r.0).collect(),
            wildtype: rows.iter().map(|r| r.1).collect(),
            scores: rows.into_iter().map(|r| r.2).collect(),
            index,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn wildtype(&self) -> &[AminoAcid] {
        &self.wildtype
    }

    pub fn rows(&self) -> &[[f64; 20]] {
        &self.scores
    }

    pub fn row_of(&self, position: Position) -> Option<usize> {
        self.index.get(&position).copied()
    }

    pub fn score(&self, position: Position, aa: AminoAcid) -> Option<f64> {
        self.row_of(position).map(|r| self.scores[r][aa.index()])
    }

    /// S(i, x_i) for row `row`.
    pub fn self_score(&self, row: usize) -> f64 {
        self.scores[row][self.wildtype[row].index()]
    }

    /// Whether the top-scoring amino acid of `row` is the wildtype residue.
    pub fn is_correct(&self, row: usize) -> bool {
        ScoreVector { scores: self.scores[row] }.argmax() == self.wildtype[row]
    }

    pub fn correct_flags(&self) -> Vec<bool> {
        (0..self.len()).map(|r| self.is_correct(r)).collect()
    }

    /// Lookup table (position, amino acid) → score over all rows.
    pub fn score_map(&self) -> HashMap<(Position, AminoAcid), f64> {
        let mut map = HashMap::with_capacity(self.len() * 20);
        for (k, &p) in self.positions.iter().enumerate() {
            for aa in AminoAcid::all() {
                map.insert((p, aa), self.scores[k][aa.index()]);
            }
        }
        map
    }

    /// CSV with header `position,wt_aa,A,C,...,Y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("position,wt_aa");
        for c in CODES {
            out.push(',');
            out.push(c);
        }
        out.push('\n');
        for k in 0..self.len() {
            let _ = write!(out, "{},{}", self.positions[k], self.wildtype[k]);
            for s in &self.scores[k] {
                let _ = write!(out, ",{s}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, VariantError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| VariantError::Parse { line: 1, message: e.to_string() })?
            .clone();
        let expected: Vec<String> = ["position".to_string(), "wt_aa".to_string()]
            .into_iter()
            .chain(CODES.iter().map(|c| c.to_string()))
            .collect();
        if headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(VariantError::Parse {
                line: 1,
                message: format!("expected header {}", expected.join(",")),
            });
        }
        let mut rows = Vec::new();
        for (k, record) in reader.records().enumerate() {
            let line = k + 2;
            let record = record.map_err(|e| VariantError::Parse { line, message: e.to_string() })?;
            let bad = |m: String| VariantError::Parse { line, message: m };
            let position: Position = record[0].parse().map_err(|_| bad(format!("bad position '{}'", &record[0])))?;
            let wt: AminoAcid = record[1].parse().map_err(|_| bad(format!("bad amino acid '{}'", &record[1])))?;
            let mut scores = [0.0; 20];
            for (j, s) in scores.iter_mut().enumerate() {
                *s = record[j + 2].parse().map_err(|_| bad(format!("bad score '{}'", &record[j + 2])))?;
            }
            rows.push((position, wt, scores));
        }
        ScoreMatrix::new(rows, MatrixProvenance::default())
    }
}

/// Masks each mapped residue in turn and records the scorer's 20 outputs.
pub fn score_structure(
    params: &ScorerParams,
    graph: &AtomicGraph,
    mode: EnvironmentMode,
) -> Result<ScoreMatrix, VariantError> {
    if graph.ca_map.is_empty() {
        return Err(VariantError::EmptyStructure);
    }
    params.validate()?;
    let positions: Vec<Position> = graph.positions().collect();
    let rows: Result<Vec<_>, VariantError> = positions
        .par_iter()
        .map(|&p| {
            let masked = match mode {
                EnvironmentMode::Full => mask_residue(graph, p)?,
                EnvironmentMode::Local { radius } => mask_residue(&extract_local_environment(graph, p, radius)?, p)?,
            };
            let sv = forward(params, &masked)?;
            Ok((p, masked.true_label, sv.scores))
        })
        .collect();
    ScoreMatrix::new(
        rows?,
        MatrixProvenance {
            environment: mode,
            ..Default::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aa(c: char) -> AminoAcid {
        AminoAcid::from_code(c).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut row = [0.0; 20];
        for (k, s) in row.iter_mut().enumerate() {
            *s = (k as f64 * 0.37).sin() / 3.0;
        }
        let m = ScoreMatrix::new(vec![(5, aa('W'), row), (2, aa('A'), row)], MatrixProvenance::default()).unwrap();
        assert_eq!(m.positions(), &[2, 5]);
        let back = ScoreMatrix::from_csv(&m.to_csv()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn correctness_follows_argmax() {
        let mut row = [0.0; 20];
        row[aa('G').index()] = 1.0;
        let m = ScoreMatrix::new(vec![(1, aa('G'), row), (2, aa('A'), row)], MatrixProvenance::default()).unwrap();
        assert_eq!(m.correct_flags(), vec![true, false]);
        assert_eq!(m.self_score(0), 1.0);
    }

    #[test]
    fn duplicate_positions_rejected() {
        let r = [0.0; 20];
        assert!(ScoreMatrix::new(vec![(1, aa('A'), r), (1, aa('C'), r)], MatrixProvenance::default()).is_err());
    }

    #[test]
    fn environment_mode_parses() {
        assert_eq!("full".parse::<EnvironmentMode>().unwrap(), EnvironmentMode::Full);
        assert_eq!("local:8".parse::<EnvironmentMode>().unwrap(), EnvironmentMode::Local { radius: 8.0 });
        assert!("local:-1".parse::<EnvironmentMode>().is_err());
    }
}
