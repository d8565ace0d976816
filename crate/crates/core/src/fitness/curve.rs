use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{embed, ridge_fit, EmbeddingKind, FitnessError};
use crate::ingest::{parse_mutant_token, DmsAssay};
use crate::metrics::{spearman_opt, TOP_K};
use crate::structio::{AminoAcid, Position};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub test_fraction: f64,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            sizes: vec![24, 48, 96, 144, 192],
            repeats: 20,
            test_fraction: 0.2,
            lambda: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// Sequence embedding only (score column zeroed).
    Baseline,
    /// Sequence embedding plus the per-mutation score.
    Augmented,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Baseline => "baseline",
            ModelVariant::Augmented => "augmented",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMetric {
    Spearman,
    SpearmanBetterWt,
    Top10Precision,
    Top10Recall,
}

impl CurveMetric {
    pub const ALL: [CurveMetric; 4] = [
        CurveMetric::Spearman,
        CurveMetric::SpearmanBetterWt,
        CurveMetric::Top10Precision,
        CurveMetric::Top10Recall,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CurveMetric::Spearman => "spearman",
            CurveMetric::SpearmanBetterWt => "spearman_better_wt",
            CurveMetric::Top10Precision => "top10_precision",
            CurveMetric::Top10Recall => "top10_recall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub model: ModelVariant,
    pub size: usize,
    pub repeat: usize,
    pub metric: CurveMetric,
    pub value: f64,
}

/// Mean and population standard deviation over the repeats where the
/// metric was defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveAggregate {
    pub model: ModelVariant,
    pub size: usize,
    pub metric: CurveMetric,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    /// Sorted by (model, size, repeat, metric).
    pub points: Vec<CurvePoint>,
    /// Sorted by (model, size, metric).
    pub aggregates: Vec<CurveAggregate>,
    /// Records used (those with a score).
    pub n_records: usize,
    pub n_test: usize,
}

impl LearningCurve {
    pub fn aggregate(&self, model: ModelVariant, size: usize, metric: CurveMetric) -> Option<&CurveAggregate> {
        self.aggregates
            .iter()
            .find(|a| a.model == model && a.size == size && a.metric == metric)
    }

    /// `size,repeat,metric,value` for one model variant.
    pub fn points_csv(&self, model: ModelVariant) -> String {
        let mut out = String::from("size,repeat,metric,value\n");
        for p in self.points.iter().filter(|p| p.model == model) {
            let _ = writeln!(out, "{},{},{},{}", p.size, p.repeat, p.metric.name(), p.value);
        }
        out
    }

    /// `size,metric,mean,std` for one model variant.
    pub fn aggregate_csv(&self, model: ModelVariant) -> String {
        let mut out = String::from("size,metric,mean,std\n");
        for a in self.aggregates.iter().filter(|a| a.model == model) {
            let _ = writeln!(out, "{},{},{},{}", a.size, a.metric.name(), a.mean, a.std);
        }
        out
    }
}

/// Reads CSV `mutant,score` (e.g. `A24G,1.3`), the format for scores from
/// another model.
pub fn read_score_file(text: &str) -> Result<HashMap<(Position, AminoAcid), f64>, FitnessError> {
    let mut out = HashMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (k == 0 && line.starts_with("mutant")) {
            continue;
        }
        let bad = |m: String| FitnessError::Parse { line: k + 1, message: m };
        let (token, score) = line.split_once(',').ok_or_else(|| bad("expected mutant,score".into()))?;
        let (_, position, mutant) = parse_mutant_token(token).ok_or_else(|| bad(format!("bad mutant '{token}'")))?;
        let score: f64 = score.trim().parse().map_err(|_| bad(format!("bad score '{score}'")))?;
        out.insert((position, mutant), score);
    }
    Ok(out)
}

struct Row {
    features: Vec<f64>,
    fitness: f64,
    position: Position,
    mutant: AminoAcid,
}

fn test_metrics(predictions: &[f64], rows: &[&Row], assay: &DmsAssay) -> Vec<(CurveMetric, f64)> {
    let fitness: Vec<f64> = rows.iter().map(|r| r.fitness).collect();
    let mut out = Vec::new();
    if let Some(r) = spearman_opt(predictions, &fitness) {
        out.push((CurveMetric::Spearman, r));
    }
    let (bp, bf): (Vec<f64>, Vec<f64>) = predictions
        .iter()
        .zip(&fitness)
        .filter(|(_, &f)| assay.is_better_than_wt(f))
        .map(|(&p, &f)| (p, f))
        .unzip();
    if let Some(r) = spearman_opt(&bp, &bf) {
        out.push((CurveMetric::SpearmanBetterWt, r));
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        predictions[b]
            .total_cmp(&predictions[a])
            .then(rows[a].position.cmp(&rows[b].position))
            .then(rows[a].mutant.index().cmp(&rows[b].mutant.index()))
    });
    let k = rows.len().min(TOP_K);
    let hits = order[..k].iter().filter(|&&i| assay.is_better_than_wt(fitness[i])).count();
    if k > 0 {
        out.push((CurveMetric::Top10Precision, hits as f64 / k as f64));
    }
    let better = bf.len();
    if better > 0 {
        out.push((CurveMetric::Top10Recall, hits as f64 / better as f64));
    }
    out
}

fn run_repeat(
    rows: &[Row],
    n_test: usize,
    assay: &DmsAssay,
    config: &CurveConfig,
    repeat: usize,
) -> Result<Vec<CurvePoint>, FitnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(repeat as u64));
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    let (test, train) = order.split_at(n_test);
    let test_rows: Vec<&Row> = test.iter().map(|&i| &rows[i]).collect();
    let score_slot = rows[0].features.len() - 1;
    let mut points = Vec::new();
    for &size in &config.sizes {
        for model in [ModelVariant::Baseline, ModelVariant::Augmented] {
            let prepare = |f: &[f64]| -> Vec<f64> {
                let mut f = f.to_vec();
                if model == ModelVariant::Baseline {
                    f[score_slot] = 0.0;
                }
                f
            };
            let x: Vec<Vec<f64>> = train[..size].iter().map(|&i| prepare(&rows[i].features)).collect();
            let y: Vec<f64> = train[..size].iter().map(|&i| rows[i].fitness).collect();
            let fit = ridge_fit(&x, &y, config.lambda)?;
            let predictions: Vec<f64> = test_rows.iter().map(|r| fit.predict(&prepare(&r.features))).collect();
            for (metric, value) in test_metrics(&predictions, &test_rows, assay) {
                points.push(CurvePoint {
                    model,
                    size,
                    repeat,
                    metric,
                    value,
                });
            }
        }
    }
    Ok(points)
}

/// Learning curves for the baseline and score-augmented ridge models.
///
/// Each repeat shuffles the scored records with seed `seed + repeat`, holds
/// out the first `round(test_fraction · N)` as the test set, and trains on
/// nested prefixes of the remainder. Records without a score are left out.
pub fn learning_curve(
    assay: &DmsAssay,
    scores: &HashMap<(Position, AminoAcid), f64>,
    kind: &EmbeddingKind,
    config: &CurveConfig,
) -> Result<LearningCurve, FitnessError> {
    if config.repeats == 0 {
        return Err(FitnessError::Invalid("repeats must be positive".into()));
    }
    if !(config.test_fraction > 0.0 && config.test_fraction < 1.0) {
        return Err(FitnessError::Invalid(format!("test_fraction {} outside (0, 1)", config.test_fraction)));
    }
    let mut rows = Vec::with_capacity(assay.records.len());
    let mut unscored = 0;
    for r in &assay.records {
        let Some(&score) = scores.get(&(r.position, r.mutant)) else {
            unscored += 1;
            continue;
        };
        rows.push(Row {
            features: embed(&assay.wildtype, r.position, r.mutant, kind, score)?,
            fitness: r.fitness,
            position: r.position,
            mutant: r.mutant,
        });
    }
    if unscored > 0 {
        log::warn!("{}: {unscored} mutations have no score and are left out", assay.id);
    }
    let n_test = (config.test_fraction * rows.len() as f64).round() as usize;
    let available = rows.len() - n_test;
    if n_test == 0 {
        return Err(FitnessError::Invalid(format!("{}: too few scored mutations ({})", assay.id, rows.len())));
    }
    if let Some(&size) = config.sizes.iter().find(|&&s| s > available || s == 0) {
        return Err(FitnessError::SizeTooLarge {
            assay: assay.id.clone(),
            size,
            available,
        });
    }
    let per_repeat: Result<Vec<Vec<CurvePoint>>, FitnessError> = (0..config.repeats)
        .into_par_iter()
        .map(|r| run_repeat(&rows, n_test, assay, config, r))
        .collect();
    let mut points: Vec<CurvePoint> = per_repeat?.into_iter().flatten().collect();
    points.sort_by(|a, b| (a.model, a.size, a.repeat, a.metric).cmp(&(b.model, b.size, b.repeat, b.metric)));
    points.dedup_by(|a, b| (a.model, a.size, a.repeat, a.metric) == (b.model, b.size, b.repeat, b.metric));

    let mut groups: std::collections::BTreeMap<(ModelVariant, usize, CurveMetric), Vec<f64>> = Default::default();
    for p in &points {
        groups.entry((p.model, p.size, p.metric)).or_default().push(p.value);
    }
    let aggregates = groups
        .into_iter()
        .map(|((model, size, metric), values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            CurveAggregate {
                model,
                size,
                metric,
                mean,
                std,
                n: values.len(),
            }
        })
        .collect();
    Ok(LearningCurve {
        points,
        aggregates,
        n_records: rows.len(),
        n_test,
    })
}
