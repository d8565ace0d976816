//! Rank correlations, top-10 precision/recall, confusion matrices and the
//! BLOSUM62 comparison.

mod blosum;

pub use blosum::{blosum62, BLOSUM62_STANDARD, STANDARD_ORDER};

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DmsAssay;
use crate::scorer::{forward, ScorerError, ScorerParams};
use crate::structio::{AminoAcid, MaskedGraph, Position};
use crate::variants::RankedMutation;

pub const TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 2 items, got {0}")]
    TooFew(usize),
    #[error("correlation undefined: {0}")]
    Undefined(String),
    #[error("ranked mutation {0} is not in the assay")]
    MissingMutation(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// Ranks starting at 1; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooFew(xs.len()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::Undefined("constant input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Spearman, or `None` when fewer than two items or an input is constant.
pub fn spearman_opt(xs: &[f64], ys: &[f64]) -> Option<f64> {
    spearman(xs, ys).ok()
}

/// Denominator of top-10 recall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecallDenominator {
    /// Every better-than-wildtype mutation in the assay.
    #[default]
    Assay,
    /// Better-than-wildtype mutations at positions that appear in the ranking.
    RankedPositions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub spearman_all: Option<f64>,
    pub spearman_better_wt: Option<f64>,
    pub spearman_worse_wt: Option<f64>,
    pub top10_precision: f64,
    pub top10_recall: f64,
    pub n_total: usize,
    pub n_better: usize,
    pub n_worse: usize,
    /// Recall denominator actually used.
    pub n_better_reference: usize,
}

impl EvaluationReport {
    pub const CSV_HEADER: &'static str =
        "model,strategy,top10_precision,top10_recall,spearman_all,spearman_better_wt,spearman_worse_wt";

    /// One row of the per-dataset table; absent correlations are empty fields.
    pub fn csv_row(&self, model: &str, strategy: &str) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{model},{strategy},{},{},{},{},{}",
            self.top10_precision,
            self.top10_recall,
            opt(self.spearman_all),
            opt(self.spearman_better_wt),
            opt(self.spearman_worse_wt)
        )
    }
}

/// Top-10 precision: fraction of the first min(10, k) items that are better
/// than wildtype. Recall: the same count over the number of better-than-WT
/// mutations. Correlations use the ranking's scores against measured fitness.
pub fn evaluate_ranking(
    ranked: &[RankedMutation],
    assay: &DmsAssay,
    denominator: RecallDenominator,
) -> Result<EvaluationReport, MetricsError> {
    let fitness = assay.fitness_map();
    let mut scores = Vec::with_capacity(ranked.len());
    let mut values = Vec::with_capacity(ranked.len());
    for r in ranked {
        let f = fitness
            .get(&(r.position, r.mutant))
            .ok_or_else(|| MetricsError::MissingMutation(format!("{}{}{}", r.wildtype, r.position, r.mutant)))?;
        scores.push(r.score);
        values.push(*f);
    }
    let subset = |keep: &dyn Fn(f64) -> bool| -> (Vec<f64>, Vec<f64>) {
        scores
            .iter()
            .zip(&values)
            .filter(|(_, &f)| keep(f))
            .map(|(&s, &f)| (s, f))
            .unzip()
    };
    let (bs, bf) = subset(&|f| assay.is_better_than_wt(f));
    let (ws, wf) = subset(&|f| assay.is_worse_than_wt(f));

    let k = ranked.len().min(TOP_K);
    if ranked.len() < TOP_K {
        log::warn!("ranking has only {} items; top-10 precision divides by {k}", ranked.len());
    }
    let hits = values[..k].iter().filter(|&&f| assay.is_better_than_wt(f)).count();
    let n_better_reference = match denominator {
        RecallDenominator::Assay => assay.better_than_wt_count(),
        RecallDenominator::RankedPositions => {
            let positions: HashSet<Position> = ranked.iter().map(|r| r.position).collect();
            assay
                .records
                .iter()
                .filter(|r| positions.contains(&r.position) && assay.is_better_than_wt(r.fitness))
                .count()
        }
    };
    Ok(EvaluationReport {
        spearman_all: spearman_opt(&scores, &values),
        spearman_better_wt: spearman_opt(&bs, &bf),
        spearman_worse_wt: spearman_opt(&ws, &wf),
        top10_precision: if k == 0 { 0.0 } else { hits as f64 / k as f64 },
        top10_recall: if n_better_reference == 0 {
            0.0
        } else {
            hits as f64 / n_better_reference as f64
        },
        n_total: ranked.len(),
        n_better: bs.len(),
        n_worse: ws.len(),
        n_better_reference,
    })
}

pub type Confusion = [[u64; 20]; 20];

/// Counts (true, predicted) pairs.
pub fn confusion_from_pairs(pairs: impl IntoIterator<Item = (AminoAcid, AminoAcid)>) -> Confusion {
    let mut m = [[0u64; 20]; 20];
    for (t, p) in pairs {
        m[t.index()][p.index()] += 1;
    }
    m
}

/// Entry (true, predicted) counts argmax predictions over the dataset.
pub fn confusion_matrix(params: &ScorerParams, dataset: &[MaskedGraph]) -> Result<Confusion, MetricsError> {
    if dataset.is_empty() {
        return Err(MetricsError::EmptyDataset);
    }
    let pairs: Result<Vec<_>, ScorerError> = dataset
        .par_iter()
        .map(|m| Ok((m.true_label, forward(params, m)?.argmax())))
        .collect();
    Ok(confusion_from_pairs(pairs?))
}

/// Off-diagonal (true ≠ predicted) confusion frequencies, each normalized by
/// its row total, flattened row-major alongside the matching substitution
/// scores. Rows without any prediction are skipped.
pub fn off_diagonal_pairs(confusion: &Confusion, blosum: &[[i32; 20]; 20]) -> (Vec<f64>, Vec<f64>) {
    let mut freq = Vec::new();
    let mut subst = Vec::new();
    for i in 0..20 {
        let total: u64 = confusion[i].iter().sum();
        if total == 0 {
            continue;
        }
        for j in 0..20 {
            if i != j {
                freq.push(confusion[i][j] as f64 / total as f64);
                subst.push(blosum[i][j] as f64);
            }
        }
    }
    (freq, subst)
}

/// Spearman between row-normalized off-diagonal confusion frequencies and
/// the corresponding substitution scores.
pub fn compare_to_blosum62(confusion: &Confusion, blosum: &[[i32; 20]; 20]) -> Result<f64, MetricsError> {
    let (freq, subst) = off_diagonal_pairs(confusion, blosum);
    if freq.iter().all(|&f| f == 0.0) {
        return Err(MetricsError::Undefined("confusion matrix has no off-diagonal mass".into()));
    }
    spearman(&freq, &subst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationSubset {
    #[default]
    All,
    BetterWt,
}

impl std::str::FromStr for CorrelationSubset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(CorrelationSubset::All),
            "better_wt" | "better-wt" => Ok(CorrelationSubset::BetterWt),
            other => Err(format!("unknown subset '{other}' (all|better_wt)")),
        }
    }
}

/// Spearman between two models' scores on the mutations both ranked.
pub fn cross_model_correlation(
    ranked_a: &[RankedMutation],
    ranked_b: &[RankedMutation],
    assay: &DmsAssay,
    subset: CorrelationSubset,
) -> Result<f64, MetricsError> {
    let fitness = assay.fitness_map();
    let b: HashMap<(Position, AminoAcid), f64> = ranked_b.iter().map(|r| ((r.position, r.mutant), r.score)).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in ranked_a {
        let key = (r.position, r.mutant);
        let Some(&sb) = b.get(&key) else { continue };
        if subset == CorrelationSubset::BetterWt && !fitness.get(&key).is_some_and(|&f| assay.is_better_than_wt(f)) {
            continue;
        }
        xs.push(r.score);
        ys.push(sb);
    }
    if xs.len() < 2 {
        return Err(MetricsError::TooFew(xs.len()));
    }
    spearman(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_and_reversed() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn ties_get_mean_rank() {
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricsError::Undefined(_))));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(MetricsError::TooFew(1))));
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0]), Err(MetricsError::LengthMismatch(2, 1))));
    }

    #[test]
    fn diagonal_confusion_is_undefined() {
        let mut c = [[0u64; 20]; 20];
        for (i, row) in c.iter_mut().enumerate() {
            row[i] = 5;
        }
        assert!(matches!(compare_to_blosum62(&c, &blosum62()), Err(MetricsError::Undefined(_))));
    }

    proptest! {
        #[test]
        fn spearman_is_bounded_and_symmetric(v in proptest::collection::vec((-10i32..10, -10i32..10), 2..40)) {
            let xs: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let ys: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            if let Ok(r) = spearman(&xs, &ys) {
                prop_assert!((-1.0..=1.0).contains(&r));
                prop_assert_eq!(r, spearman(&ys, &xs).unwrap());
            }
        }
    }
}
