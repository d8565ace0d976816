use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use varscore::fitness::{
    learning_curve, read_aaindex_csv, read_score_file, reduce_aaindex, CurveMetric, EmbeddingKind, ModelVariant,
};
use varscore::ingest::{
    fetch_structure_with, generate_synthetic_res, load_res_dataset, parse_dms_with_reference, DmsAssay, FetchRequest,
    HttpClient, StructureSource,
};
use varscore::metrics::{
    blosum62, compare_to_blosum62, confusion_matrix, cross_model_correlation, evaluate_ranking, CorrelationSubset,
    EvaluationReport, RecallDenominator,
};
use varscore::scorer::{evaluate_accuracy, load_checkpoint, train_res, Checkpoint, ScorerParams, FeatureSpec};
use varscore::structio::{
    build_atomic_graph, build_atomic_graph_for_chain, parse_structure, AminoAcid, AtomicGraph, MaskedGraph, Position,
    StructureFormat, DEFAULT_CUTOFF,
};
use varscore::variants::{
    generate_mutations, rank, read_ranked_tsv, score_structure, write_ranked_tsv, Candidate, ScoreMatrix,
};

use crate::config::{sha256_file, RunConfig};
use crate::output::{Outputs, Provenance};
use crate::plot::curve_svg;

/// Result of one command: the files written and how many items failed.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: usize,
}

fn outputs(command: &str, config: &RunConfig, inputs: &[(&str, &Path)]) -> Result<Outputs> {
    let mut prov = Provenance::new(command, config);
    for (name, path) in inputs {
        prov.inputs.insert(name.to_string(), sha256_file(path)?);
    }
    Outputs::new(&config.output_dir, prov)
}

fn require_checkpoint(config: &RunConfig) -> Result<(Checkpoint, String)> {
    let path = config
        .checkpoint
        .as_ref()
        .ok_or_else(|| anyhow!("this command needs a scorer checkpoint (--checkpoint)"))?;
    let ck = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
    let id = ck.id()?;
    Ok((ck, id))
}

fn read_graph(path: &Path, chain: Option<char>, cutoff: f64) -> Result<AtomicGraph> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let atoms = parse_structure(&bytes, StructureFormat::Pdb).with_context(|| format!("parsing {}", path.display()))?;
    Ok(match chain {
        Some(c) => build_atomic_graph_for_chain(atoms, cutoff, c)?,
        None => build_atomic_graph(atoms, cutoff)?,
    })
}

fn read_assay(path: &Path, config: &RunConfig) -> Result<DmsAssay> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let (assay, stats) = parse_dms_with_reference(&bytes, config.ingest.wt_reference)
        .with_context(|| format!("parsing {}", path.display()))?;
    log::info!(
        "{}: {} single substitutions ({} multi, {} synonymous skipped)",
        assay.id,
        stats.single,
        stats.skipped_multi,
        stats.skipped_synonymous
    );
    Ok(assay)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

// ---------------------------------------------------------------- fetch

#[derive(Debug, Clone, Args)]
pub struct FetchArgs {
    /// Sources as `pdb:<id>[:<assembly>]`, `af:<uniprot>` or a file path;
    /// `<primary>,<fallback>` names a fallback for incomplete structures.
    pub sources: Vec<String>,
    /// Assay whose measured positions the structures must cover.
    #[arg(long)]
    pub assay: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ManifestRow {
    request: String,
    source: &'static str,
    kind: String,
    id: String,
    path: String,
    coverage: String,
    fallback_used: bool,
    error: String,
}

pub fn cmd_fetch(config: &RunConfig, args: &FetchArgs, client: &dyn HttpClient) -> Result<Outcome> {
    let required: Vec<Position> = match &args.assay {
        Some(p) => {
            let assay = read_assay(p, config)?;
            let mut positions: Vec<Position> = assay.records.iter().map(|r| r.position).collect();
            positions.sort_unstable();
            positions.dedup();
            positions
        }
        None => Vec::new(),
    };
    let rows: Vec<ManifestRow> = args
        .sources
        .par_iter()
        .map(|spec| {
            let (primary, fallback) = match spec.split_once(',') {
                Some((a, b)) => (a, Some(StructureSource::parse(b.trim()))),
                None => (spec.as_str(), None),
            };
            let request = FetchRequest {
                source: StructureSource::parse(primary.trim()),
                fallback,
                required_positions: required.clone(),
            };
            match fetch_structure_with(client, &request, &config.ingest) {
                Ok(r) => ManifestRow {
                    request: spec.clone(),
                    source: match (&r.source, r.from_cache) {
                        (StructureSource::Local { .. }, _) => "local",
                        (_, true) => "cache",
                        (_, false) => "network",
                    },
                    kind: r.source.kind().into(),
                    id: r.source.id(),
                    path: r.path.display().to_string(),
                    coverage: r.coverage.to_string(),
                    fallback_used: r.fallback_used,
                    error: String::new(),
                },
                Err(e) => {
                    log::error!("{spec}: {e}");
                    ManifestRow {
                        request: spec.clone(),
                        source: "failed",
                        kind: request.source.kind().into(),
                        id: request.source.id(),
                        path: String::new(),
                        coverage: String::new(),
                        fallback_used: false,
                        error: e.to_string(),
                    }
                }
            }
        })
        .collect();
    let failures = rows.iter().filter(|r| r.source == "failed").count();
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["request", "source", "kind", "id", "path", "coverage", "fallback_used", "error"])?;
    }
    for r in &rows {
        w.serialize(r)?;
    }
    let inputs: Vec<(&str, &Path)> = args.assay.iter().map(|p| ("assay", p.as_path())).collect();
    let mut out = outputs("fetch", config, &inputs)?;
    out.write("fetch_manifest.csv", &w.into_inner()?)?;
    Ok(Outcome {
        files: out.written().to_vec(),
        failures,
    })
}

// ---------------------------------------------------------------- graph

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub structure: PathBuf,
    /// Primary chain; defaults to the chain of the first atom.
    #[arg(long)]
    pub chain: Option<char>,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    pub cutoff: f64,
}

pub fn cmd_graph(config: &RunConfig, args: &GraphArgs) -> Result<Outcome> {
    let graph = read_graph(&args.structure, args.chain, args.cutoff)?;
    log::info!(
        "{} atoms, {} directed edges, {} residues on chain {}",
        graph.atoms.len(),
        graph.edges.len(),
        graph.ca_map.len(),
        graph.chain
    );
    let mut out = outputs("graph", config, &[("structure", &args.structure)])?;
    out.write("graph.json", &json_bytes(&graph.dump())?)?;
    Ok(Outcome {
        files: out.written().to_vec(),
        failures: 0,
    })
}

// ---------------------------------------------------------------- train-res

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false, id = "res_source")]
pub struct ResSource {
    /// Generate this many synthetic samples (seeded by --seed).
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Directory with structure files and `targets.csv`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

impl ResSource {
    fn load(&self, seed: u64) -> Result<Vec<MaskedGraph>> {
        match (self.synthetic, &self.dataset) {
            (Some(n), _) if n > 0 => Ok(generate_synthetic_res(n, seed)),
            (Some(_), _) => bail!("--synthetic needs a positive sample count"),
            (None, Some(dir)) => Ok(load_res_dataset(dir)?.into_result()?),
            (None, None) => bail!("give --synthetic or --dataset"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: ResSource,
    /// Fraction of samples held out for validation.
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_validation: usize,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_val_accuracy: Option<f64>,
    pub num_parameters: usize,
}

pub fn cmd_train_res(config: &RunConfig, args: &TrainArgs) -> Result<(Outcome, TrainSummary)> {
    if !(0.0..1.0).contains(&args.val_fraction) {
        bail!("--val-fraction must be in [0, 1)");
    }
    let mut data = args.source.load(config.seed)?;
    data.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_val = (args.val_fraction * data.len() as f64).round() as usize;
    let (val, train) = data.split_at(n_val);
    let init = ScorerParams::init(FeatureSpec::default(), config.seed)?;
    let num_parameters = init.num_parameters();
    log::info!("training on {} samples, validating on {}, {num_parameters} parameters", train.len(), val.len());
    let outcome = train_res(init, train, val, &config.train)?;

    let mut csv = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy,learning_rate\n");
    for m in &outcome.history {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            m.epoch, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy, m.learning_rate
        );
        log::info!("epoch {}: train loss {:.4}, val accuracy {:.4}", m.epoch, m.train_loss, m.val_accuracy);
    }
    let best_val_accuracy = outcome
        .best_epoch
        .and_then(|e| outcome.history.iter().find(|m| m.epoch == e))
        .filter(|_| !val.is_empty())
        .map(|m| m.val_accuracy);
    let ck = Checkpoint::new(outcome.params, Some(config.train.clone()));
    let targets = args.source.dataset.as_ref().map(|d| d.join(varscore::ingest::TARGETS_FILE));
    let inputs: Vec<(&str, &Path)> = targets.iter().map(|t| ("dataset_targets", t.as_path())).collect();
    let mut out = outputs("train-res", config, &inputs)?;
    out.write("train_metrics.csv", csv.as_bytes())?;
    out.provenance.checkpoint_hash = Some(ck.id()?);
    out.write("checkpoint.json", ck.to_json()?.as_bytes())?;
    let summary = TrainSummary {
        n_train: train.len(),
        n_validation: val.len(),
        epochs_run: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best_val_accuracy,
        num_parameters,
    };
    out.write("train_summary.json", &json_bytes(&summary)?)?;
    Ok((
        Outcome {
            files: out.written().to_vec(),
            failures: 0,
        },
        summary,
    ))
}

// ---------------------------------------------------------------- score

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub structure: PathBuf,
    #[arg(long)]
    pub chain: Option<char>,
}

fn score_file(config: &RunConfig, structure: &Path, chain: Option<char>) -> Result<(ScoreMatrix, String)> {
    let (ck, id) = require_checkpoint(config)?;
    let graph = read_graph(structure, chain, DEFAULT_CUTOFF)?;
    let matrix = score_structure(&ck.params, &graph, config.environment)?;
    let wrong = matrix.correct_flags().iter().filter(|c| !**c).count();
    log::info!("scored {} positions; top choice differs from wildtype at {wrong}", matrix.len());
    Ok((matrix, id))
}

pub fn cmd_score(config: &RunConfig, args: &ScoreArgs) -> Result<Outcome> {
    let (matrix, id) = score_file(config, &args.structure, args.chain)?;
    let mut out = outputs("score", config, &[("structure", &args.structure)])?;
    out.provenance.checkpoint_hash = Some(id);
    out.write("score_matrix.csv", matrix.to_csv().as_bytes())?;
    Ok(Outcome {
        files: out.written().to_vec(),
        failures: 0,
    })
}

// ---------------------------------------------------------------- rank

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false, id = "matrix_source")]
pub struct MatrixSource {
    /// Structure to score with the configured checkpoint.
    #[arg(long)]
    pub structure: Option<PathBuf>,
    /// Precomputed score matrix CSV.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
}

impl MatrixSource {
    fn load(&self, config: &RunConfig, chain: Option<char>) -> Result<(ScoreMatrix, Option<String>, (&'static str, &Path))> {
        match (&self.structure, &self.matrix) {
            (Some(s), _) => {
                let (m, id) = score_file(config, s, chain)?;
                Ok((m, Some(id), ("structure", s.as_path())))
            }
            (None, Some(p)) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok((ScoreMatrix::from_csv(&text)?, None, ("matrix", p.as_path())))
            }
            (None, None) => bail!("give --structure or --matrix"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub source: MatrixSource,
    #[arg(long)]
    pub assay: PathBuf,
    #[arg(long)]
    pub chain: Option<char>,
    /// Label used in the evaluation table.
    #[arg(long, default_value = "gvp")]
    pub model_name: String,
}

fn denominator(config: &RunConfig) -> RecallDenominator {
    if config.recall_ranked_positions {
        RecallDenominator::RankedPositions
    } else {
        RecallDenominator::Assay
    }
}

fn candidates_csv(cands: &[Candidate]) -> String {
    let mut s = String::from("position,wildtype,mutant,score,self_score\n");
    for c in cands {
        let _ = writeln!(s, "{},{},{},{},{}", c.position, c.wildtype, c.mutant, c.score, c.self_score);
    }
    s
}

pub fn cmd_rank(config: &RunConfig, args: &RankArgs) -> Result<(Outcome, EvaluationReport)> {
    let assay = read_assay(&args.assay, config)?;
    let (matrix, checkpoint_id, input) = args.source.load(config, args.chain)?;
    let cands = generate_mutations(&matrix, &assay, config.filter_wrong)?;
    let ranked = rank(&cands, config.strategy, config.epsilon);
    let report = evaluate_ranking(&ranked, &assay, denominator(config))?;
    log::info!(
        "{} ranked mutations; top-10 precision {}, recall {}, spearman {:?}",
        ranked.len(),
        report.top10_precision,
        report.top10_recall,
        report.spearman_all
    );
    let mut out = outputs("rank", config, &[("assay", &args.assay), input])?;
    out.provenance.checkpoint_hash = checkpoint_id;
    if config.keep_intermediates {
        out.write("score_matrix.csv", matrix.to_csv().as_bytes())?;
        out.write("candidates.csv", candidates_csv(&cands).as_bytes())?;
    }
    out.write("ranked.tsv", write_ranked_tsv(&ranked).as_bytes())?;
    out.write("report.json", &json_bytes(&report)?)?;
    let table = format!(
        "{}\n{}\n",
        EvaluationReport::CSV_HEADER,
        report.csv_row(&args.model_name, &config.strategy.to_string())
    );
    out.write("evaluation.csv", table.as_bytes())?;
    Ok((
        Outcome {
            files: out.written().to_vec(),
            failures: 0,
        },
        report,
    ))
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Ranked TSV as written by `rank`.
    #[arg(long)]
    pub ranked: PathBuf,
    #[arg(long)]
    pub assay: PathBuf,
    /// A second model's ranked TSV for rank-correlation comparison.
    #[arg(long)]
    pub other: Option<PathBuf>,
    #[arg(long, default_value = "gvp")]
    pub model_name: String,
}

pub fn cmd_evaluate(config: &RunConfig, args: &EvaluateArgs) -> Result<(Outcome, EvaluationReport)> {
    let assay = read_assay(&args.assay, config)?;
    let read = |p: &Path| -> Result<_> {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(read_ranked_tsv(&text)?)
    };
    let ranked = read(&args.ranked)?;
    let report = evaluate_ranking(&ranked, &assay, denominator(config))?;
    let mut inputs = vec![("assay", args.assay.as_path()), ("ranked", args.ranked.as_path())];
    if let Some(o) = &args.other {
        inputs.push(("other", o.as_path()));
    }
    let mut out = outputs("evaluate", config, &inputs)?;
    out.write("report.json", &json_bytes(&report)?)?;
    let table = format!(
        "{}\n{}\n",
        EvaluationReport::CSV_HEADER,
        report.csv_row(&args.model_name, &config.strategy.to_string())
    );
    out.write("evaluation.csv", table.as_bytes())?;
    if let Some(other) = &args.other {
        let other = read(other)?;
        let mut csv = String::from("subset,spearman\n");
        for (name, subset) in [("all", CorrelationSubset::All), ("better_wt", CorrelationSubset::BetterWt)] {
            let value = match cross_model_correlation(&ranked, &other, &assay, subset) {
                Ok(v) => v.to_string(),
                Err(e) => {
                    log::warn!("cross-model correlation ({name}): {e}");
                    String::new()
                }
            };
            let _ = writeln!(csv, "{name},{value}");
        }
        out.write("cross_model.csv", csv.as_bytes())?;
    }
    Ok((
        Outcome {
            files: out.written().to_vec(),
            failures: 0,
        },
        report,
    ))
}

// ---------------------------------------------------------------- regress

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false, id = "score_source")]
pub struct ScoreSource {
    /// Structure to score with the configured checkpoint.
    #[arg(long)]
    pub structure: Option<PathBuf>,
    /// Score matrix CSV from `score`.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// External per-mutation scores, CSV `mutant,score`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RegressArgs {
    #[arg(long)]
    pub assay: PathBuf,
    #[command(flatten)]
    pub source: ScoreSource,
    #[arg(long)]
    pub chain: Option<char>,
}

pub fn cmd_regress(config: &RunConfig, args: &RegressArgs) -> Result<Outcome> {
    let assay = read_assay(&args.assay, config)?;
    let mut checkpoint_id = None;
    let (scores, input): (HashMap<(Position, AminoAcid), f64>, (&str, &Path)) =
        match (&args.source.structure, &args.source.matrix, &args.source.scores) {
            (Some(s), _, _) => {
                let (m, id) = score_file(config, s, args.chain)?;
                checkpoint_id = Some(id);
                (m.score_map(), ("structure", s))
            }
            (None, Some(p), _) => (ScoreMatrix::from_csv(&std::fs::read_to_string(p)?)?.score_map(), ("matrix", p)),
            (None, None, Some(p)) => (read_score_file(&std::fs::read_to_string(p)?)?, ("scores", p)),
            _ => bail!("give --structure, --matrix or --scores"),
        };
    let mut kinds = vec![EmbeddingKind::OneHot];
    let mut inputs = vec![("assay", args.assay.as_path()), input];
    if let Some(p) = &config.aaindex {
        let raw = read_aaindex_csv(&std::fs::read_to_string(p)?)?;
        kinds.push(EmbeddingKind::AaIndex(reduce_aaindex(&raw)?));
        inputs.push(("aaindex", p.as_path()));
    } else {
        log::info!("no aaindex table configured; fitting the one-hot embedding only");
    }
    let mut out = outputs("regress", config, &inputs)?;
    out.provenance.checkpoint_hash = checkpoint_id;
    let curve_config = config.curve_config();
    for kind in &kinds {
        let curve = learning_curve(&assay, &scores, kind, &curve_config)?;
        for model in [ModelVariant::Baseline, ModelVariant::Augmented] {
            let stem = format!("curve_{}_{}", model.name(), kind.name());
            out.write(&format!("{stem}.csv"), curve.points_csv(model).as_bytes())?;
            out.write(&format!("{stem}_agg.csv"), curve.aggregate_csv(model).as_bytes())?;
        }
        for metric in CurveMetric::ALL {
            let title = format!("{} — {}", assay.id, kind.name());
            match curve_svg(&curve, metric, &title) {
                Ok(svg) => {
                    out.write(&format!("curve_{}_{}.svg", kind.name(), metric.name()), svg.as_bytes())?;
                }
                Err(e) => log::warn!("plot {} {}: {e}", kind.name(), metric.name()),
            }
        }
    }
    Ok(Outcome {
        files: out.written().to_vec(),
        failures: 0,
    })
}

// ---------------------------------------------------------------- confusion

#[derive(Debug, Clone, Args)]
pub struct ConfusionArgs {
    #[command(flatten)]
    pub source: ResSource,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfusionSummary {
    pub n_samples: usize,
    pub accuracy: f64,
    pub blosum62_spearman: Option<f64>,
}

pub fn cmd_confusion(config: &RunConfig, args: &ConfusionArgs) -> Result<(Outcome, ConfusionSummary)> {
    let (ck, id) = require_checkpoint(config)?;
    let data = args.source.load(config.seed)?;
    let confusion = confusion_matrix(&ck.params, &data)?;
    let accuracy = evaluate_accuracy(&ck.params, &data)?;
    let blosum = compare_to_blosum62(&confusion, &blosum62())
        .map_err(|e| log::warn!("BLOSUM62 comparison undefined: {e}"))
        .ok();
    let mut csv = String::from("true");
    for aa in AminoAcid::all() {
        let _ = write!(csv, ",{aa}");
    }
    csv.push('\n');
    for (aa, row) in AminoAcid::all().zip(&confusion) {
        let _ = write!(csv, "{aa}");
        for v in row {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    let summary = ConfusionSummary {
        n_samples: data.len(),
        accuracy,
        blosum62_spearman: blosum,
    };
    let targets = args.source.dataset.as_ref().map(|d| d.join(varscore::ingest::TARGETS_FILE));
    let inputs: Vec<(&str, &Path)> = targets.iter().map(|t| ("dataset_targets", t.as_path())).collect();
    let mut out = outputs("confusion", config, &inputs)?;
    out.provenance.checkpoint_hash = Some(id);
    out.write("confusion.csv", csv.as_bytes())?;
    out.write("confusion_summary.json", &json_bytes(&summary)?)?;
    Ok((
        Outcome {
            files: out.written().to_vec(),
            failures: 0,
        },
        summary,
    ))
}
