use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ScoreMatrix, VariantError};
use crate::ingest::DmsAssay;
use crate::structio::{AminoAcid, Position};

/// Mutants kept per position by the positional strategy.
pub const POSITIONAL_TOP_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub position: Position,
    pub wildtype: AminoAcid,
    pub mutant: AminoAcid,
    pub score: f64,
    pub self_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedMutation {
    pub rank: usize,
    pub position: Position,
    pub wildtype: AminoAcid,
    pub mutant: AminoAcid,
    pub score: f64,
    pub self_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Global,
    #[default]
    Positional,
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "global" => Ok(Strategy::Global),
            "positional" => Ok(Strategy::Positional),
            other => Err(format!("unknown strategy '{other}' (global|positional)")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Global => "global",
            Strategy::Positional => "positional",
        })
    }
}

/// Assay-measured substitutions at scored positions, ordered by
/// (position, mutant index). With `filter_wrong`, positions where the
/// scorer's top choice is not the wildtype residue are dropped.
pub fn generate_mutations(
    matrix: &ScoreMatrix,
    assay: &DmsAssay,
    filter_wrong: bool,
) -> Result<Vec<Candidate>, VariantError> {
    let mismatched: Vec<Position> = matrix
        .positions()
        .iter()
        .zip(matrix.wildtype())
        .filter(|(&p, &wt)| assay.wildtype_at(p).is_some_and(|a| a != wt))
        .map(|(&p, _)| p)
        .collect();
    if !mismatched.is_empty() {
        return Err(VariantError::Alignment { positions: mismatched });
    }
    let mut out = Vec::new();
    for r in &assay.records {
        let Some(row) = matrix.row_of(r.position) else { continue };
        if r.mutant == r.wildtype || (filter_wrong && !matrix.is_correct(row)) {
            continue;
        }
        out.push(Candidate {
            position: r.position,
            wildtype: r.wildtype,
            mutant: r.mutant,
            score: matrix.rows()[row][r.mutant.index()],
            self_score: matrix.self_score(row),
        });
    }
    out.sort_by_key(|c| (c.position, c.mutant.index()));
    Ok(out)
}

fn into_ranked(sorted: impl IntoIterator<Item = Candidate>) -> Vec<RankedMutation> {
    sorted
        .into_iter()
        .enumerate()
        .map(|(k, c)| RankedMutation {
            rank: k + 1,
            position: c.position,
            wildtype: c.wildtype,
            mutant: c.mutant,
            score: c.score,
            self_score: c.self_score,
        })
        .collect()
}

fn by_score_then_key(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.position.cmp(&b.position))
        .then(a.mutant.index().cmp(&b.mutant.index()))
}

/// Score descending; ties by position ascending, then amino-acid index ascending.
pub fn rank_global(candidates: &[Candidate]) -> Vec<RankedMutation> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(by_score_then_key);
    into_ranked(sorted)
}

/// Keeps the top three mutants of each position (score descending, ties by
/// amino-acid index), then orders the survivors by wildtype self-score
/// ascending, score descending, position, amino-acid index.
///
/// Positions whose self-scores lie within `epsilon` of the first
/// self-score of a run (after sorting) are treated as tied on self-score.
/// With `epsilon = 0` only exactly equal self-scores tie.
pub fn rank_positional(candidates: &[Candidate], epsilon: f64) -> Vec<RankedMutation> {
    let mut by_position: BTreeMap<Position, Vec<Candidate>> = BTreeMap::new();
    for c in candidates {
        by_position.entry(c.position).or_default().push(*c);
    }
    let mut groups: Vec<(f64, Position)> = Vec::with_capacity(by_position.len());
    for (&p, list) in by_position.iter_mut() {
        list.sort_by(by_score_then_key);
        list.truncate(POSITIONAL_TOP_K);
        groups.push((list[0].self_score, p));
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut cluster_of: BTreeMap<Position, usize> = BTreeMap::new();
    let mut cluster = 0;
    let mut start = f64::NAN;
    for (k, &(s, p)) in groups.iter().enumerate() {
        if k == 0 {
            start = s;
        } else if s - start > epsilon {
            cluster += 1;
            start = s;
        }
        cluster_of.insert(p, cluster);
    }
    let mut survivors: Vec<Candidate> = by_position.into_values().flatten().collect();
    survivors.sort_by(|a, b| cluster_of[&a.position].cmp(&cluster_of[&b.position]).then(by_score_then_key(a, b)));
    into_ranked(survivors)
}

pub fn rank(candidates: &[Candidate], strategy: Strategy, epsilon: f64) -> Vec<RankedMutation> {
    match strategy {
        Strategy::Global => rank_global(candidates),
        Strategy::Positional => rank_positional(candidates, epsilon),
    }
}

/// TSV with header `rank,position,wt,mut,score,self_score` (tab separated).
pub fn write_ranked_tsv(ranked: &[RankedMutation]) -> String {
    let mut out = String::from("rank\tposition\twt\tmut\tscore\tself_score\n");
    for r in ranked {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.rank, r.position, r.wildtype, r.mutant, r.score, r.self_score
        );
    }
    out
}

pub fn read_ranked_tsv(text: &str) -> Result<Vec<RankedMutation>, VariantError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split('\t').eq(["rank", "position", "wt", "mut", "score", "self_score"]) => {}
        _ => {
            return Err(VariantError::Parse {
                line: 1,
                message: "expected header rank,position,wt,mut,score,self_score".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (k, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| VariantError::Parse {
            line: k + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 tab-separated fields"));
        }
        out.push(RankedMutation {
            rank: f[0].parse().map_err(|_| bad("bad rank"))?,
            position: f[1].parse().map_err(|_| bad("bad position"))?,
            wildtype: f[2].parse().map_err(|_| bad("bad wildtype"))?,
            mutant: f[3].parse().map_err(|_| bad("bad mutant"))?,
            score: f[4].parse().map_err(|_| bad("bad score"))?,
            self_score: f[5].parse().map_err(|_| bad("bad self_score"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aa(c: char) -> AminoAcid {
        AminoAcid::from_code(c).unwrap()
    }

    fn cand(position: Position, mutant: char, score: f64, self_score: f64) -> Candidate {
        Candidate {
            position,
            wildtype: aa('L'),
            mutant: aa(mutant),
            score,
            self_score,
        }
    }

    #[test]
    fn global_orders_by_score() {
        let r = rank_global(&[cand(7, 'G', 0.5, 0.0), cand(1, 'A', 0.9, 0.0)]);
        assert_eq!((r[0].position, r[1].position), (1, 7));
        assert_eq!((r[0].rank, r[1].rank), (1, 2));
    }

    #[test]
    fn global_ties_are_position_then_index() {
        let r = rank_global(&[cand(3, 'C', 0.5, 0.0), cand(3, 'A', 0.5, 0.0), cand(1, 'W', 0.5, 0.0)]);
        let order: Vec<_> = r.iter().map(|m| (m.position, m.mutant.code())).collect();
        assert_eq!(order, vec![(1, 'W'), (3, 'A'), (3, 'C')]);
    }

    #[test]
    fn positional_keeps_three_and_orders_by_self_score() {
        let mut cs: Vec<Candidate> = "ACDEFGHIKMNPQRSTVWY"
            .chars()
            .enumerate()
            .map(|(k, c)| cand(9, c, k as f64, 0.9))
            .collect();
        cs.push(cand(4, 'A', -5.0, 0.1));
        let r = rank_positional(&cs, 0.0);
        assert_eq!(r.len(), 4);
        assert_eq!(r[0].position, 4);
        assert!(r[1..].iter().all(|m| m.position == 9));
        assert_eq!(r[1].mutant.code(), 'Y');
    }

    #[test]
    fn epsilon_merges_close_self_scores() {
        let cs = [cand(1, 'A', 0.1, 0.50), cand(2, 'A', 0.9, 0.505)];
        assert_eq!(rank_positional(&cs, 0.0)[0].position, 1);
        assert_eq!(rank_positional(&cs, 0.01)[0].position, 2);
    }

    #[test]
    fn tsv_round_trip() {
        let r = rank_global(&[cand(7, 'G', 0.1 + 0.2, -1e-300), cand(1, 'A', 0.9, 2.5)]);
        assert_eq!(read_ranked_tsv(&write_ranked_tsv(&r)).unwrap(), r);
    }
}
