mod common;

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use varscore::ingest::{HttpClient, HttpError};
use varscore::scorer::{load_checkpoint, FeatureSpec, ScorerParams};
use varscore::structio::{write_pdb, AminoAcid, Position};
use varscore::variants::{read_ranked_tsv, score_structure, EnvironmentMode, ScoreMatrix, Strategy};
use varscore_cli::commands::*;
use varscore_cli::output::sidecar_path;
use varscore_cli::RunConfig;

const BIN: &str = env!("CARGO_BIN_EXE_varscore");

fn varscore(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn config(out: &Path) -> RunConfig {
    RunConfig {
        output_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

fn read_manifest(path: &Path) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.deserialize().map(|x| x.unwrap()).collect()
}

#[test]
fn fetch_empty_list_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty");
    let o = varscore(&["fetch", "-o", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(read_manifest(&out.join("fetch_manifest.csv")).is_empty());

    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[ingest]\nbackoff_ms = 1\nendpoints.pdb = \"http://127.0.0.1:9/{id}\"\n").unwrap();
    let bad = dir.path().join("bad");
    let o = varscore(&[
        "fetch",
        "pdb:0XXX",
        "--config",
        cfg.to_str().unwrap(),
        "--cache-dir",
        dir.path().join("cache").to_str().unwrap(),
        "-o",
        bad.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let rows = read_manifest(&bad.join("fetch_manifest.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["source"], "failed");
}

struct CannedClient {
    body: String,
    calls: Mutex<usize>,
}

impl HttpClient for CannedClient {
    fn get(&self, _url: &str) -> Result<Vec<u8>, HttpError> {
        *self.calls.lock().unwrap() += 1;
        Ok(self.body.clone().into_bytes())
    }
}

#[test]
fn fetch_reports_cache_hits() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&dir.path().join("out"));
    cfg.ingest.cache_dir = dir.path().join("cache");
    let client = CannedClient {
        body: write_pdb(&common::helix(&[AminoAcid::from_index(0).unwrap(); 5])),
        calls: Mutex::new(0),
    };
    let args = FetchArgs {
        sources: vec!["pdb:1ABC".into()],
        assay: None,
    };
    cmd_fetch(&cfg, &args, &client).unwrap();
    let first = read_manifest(&cfg.output_dir.join("fetch_manifest.csv"));
    assert_eq!(first[0]["source"], "network");
    let again = cmd_fetch(&cfg, &args, &client).unwrap();
    assert_eq!(again.failures, 0);
    let second = read_manifest(&cfg.output_dir.join("fetch_manifest.csv"));
    assert_eq!(second[0]["source"], "cache");
    assert_eq!(*client.calls.lock().unwrap(), 1);
}

#[test]
fn zero_epochs_keeps_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.seed = 13;
    cfg.train.seed = 13;
    cfg.train.epochs = 0;
    let args = TrainArgs {
        source: ResSource {
            synthetic: Some(20),
            dataset: None,
        },
        val_fraction: 0.2,
    };
    let (out, summary) = cmd_train_res(&cfg, &args).unwrap();
    assert_eq!(summary.epochs_run, 0);
    let ck = load_checkpoint(&dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(ck.params, ScorerParams::init(FeatureSpec::default(), 13).unwrap());
    let metrics = std::fs::read_to_string(dir.path().join("train_metrics.csv")).unwrap();
    assert_eq!(metrics, "epoch,train_loss,train_accuracy,val_loss,val_accuracy,learning_rate\n");
    for f in &out.files {
        assert!(sidecar_path(f).exists(), "{}", f.display());
    }
}

/// Structure, checkpoint and assay where every substitution is measured.
struct RankCase {
    _dir: tempfile::TempDir,
    structure: PathBuf,
    checkpoint: PathBuf,
    assay: PathBuf,
    matrix: ScoreMatrix,
}

fn rank_case(n: usize) -> RankCase {
    let dir = tempfile::tempdir().unwrap();
    let seq: Vec<AminoAcid> = (0..n).map(|i| AminoAcid::from_index((i * 7) % 20).unwrap()).collect();
    let atoms = common::helix(&seq);
    let structure = dir.path().join("s.pdb");
    std::fs::write(&structure, write_pdb(&atoms)).unwrap();
    let checkpoint = dir.path().join("ck.json");
    let ck = common::save_random_checkpoint(&checkpoint, 2);
    let graph = varscore::structio::build_atomic_graph(atoms, 4.5).unwrap();
    let matrix = score_structure(&ck.params, &graph, EnvironmentMode::Full).unwrap();
    let assay = dir.path().join("a.csv");
    std::fs::write(&assay, common::assay_from_matrix(&matrix, |s| s).to_csv()).unwrap();
    RankCase {
        _dir: dir,
        structure,
        checkpoint,
        assay,
        matrix,
    }
}

fn rank_args(case: &RankCase) -> RankArgs {
    RankArgs {
        source: MatrixSource {
            structure: Some(case.structure.clone()),
            matrix: None,
        },
        assay: case.assay.clone(),
        chain: None,
        model_name: "gvp".into(),
    }
}

#[test]
fn positional_rank_caps_each_position_and_filter_drops_wrong_positions() {
    let case = rank_case(12);
    let wrong: BTreeSet<Position> = case
        .matrix
        .positions()
        .iter()
        .enumerate()
        .filter(|(r, _)| !case.matrix.is_correct(*r))
        .map(|(_, &p)| p)
        .collect();
    assert!(!wrong.is_empty(), "a random scorer should disagree with this sequence somewhere");
    let run = |filter: bool, strategy: Strategy| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        cfg.checkpoint = Some(case.checkpoint.clone());
        cfg.filter_wrong = filter;
        cfg.strategy = strategy;
        cmd_rank(&cfg, &rank_args(&case)).unwrap();
        read_ranked_tsv(&std::fs::read_to_string(dir.path().join("ranked.tsv")).unwrap()).unwrap()
    };
    let positional = run(true, Strategy::Positional);
    let mut per_position: HashMap<Position, usize> = HashMap::new();
    positional.iter().for_each(|m| *per_position.entry(m.position).or_default() += 1);
    assert!(per_position.values().all(|&c| c <= 3));

    let key = |r: &[varscore::variants::RankedMutation]| -> BTreeSet<(Position, usize)> {
        r.iter().map(|m| (m.position, m.mutant.index())).collect()
    };
    let on = key(&run(true, Strategy::Global));
    let off = key(&run(false, Strategy::Global));
    let diff: BTreeSet<Position> = off.difference(&on).map(|k| k.0).collect();
    assert_eq!(diff, wrong);
}

#[test]
fn rank_identity_assay_gives_perfect_correlation() {
    let case = rank_case(10);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.checkpoint = Some(case.checkpoint.clone());
    cfg.filter_wrong = false;
    cfg.keep_intermediates = true;
    let (out, report) = cmd_rank(&cfg, &rank_args(&case)).unwrap();
    assert!((report.spearman_all.unwrap() - 1.0).abs() < 1e-12);
    assert!(dir.path().join("score_matrix.csv").exists());
    assert!(dir.path().join("candidates.csv").exists());
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(&out.files[0])).unwrap()).unwrap();
    assert_eq!(side["checkpoint_hash"], load_checkpoint(&case.checkpoint).unwrap().id().unwrap());
}

#[test]
fn regress_shape_contract() {
    let case = rank_case(10);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.checkpoint = Some(case.checkpoint.clone());
    cfg.sizes = vec![24, 48];
    cfg.repeats = 2;
    let args = RegressArgs {
        assay: case.assay.clone(),
        source: ScoreSource {
            structure: Some(case.structure.clone()),
            matrix: None,
            scores: None,
        },
        chain: None,
    };
    cmd_regress(&cfg, &args).unwrap();
    for model in ["baseline", "augmented"] {
        let agg = std::fs::read_to_string(dir.path().join(format!("curve_{model}_one_hot_agg.csv"))).unwrap();
        assert_eq!(agg.lines().count(), 1 + 2 * 4, "{agg}");
        let points = std::fs::read_to_string(dir.path().join(format!("curve_{model}_one_hot.csv"))).unwrap();
        assert!(points.starts_with("size,repeat,metric,value\n"));
    }
    let too_big = RunConfig {
        sizes: vec![10_000],
        ..cfg
    };
    let err = cmd_regress(&too_big, &args).unwrap_err();
    assert!(format!("{err:#}").contains("synthetic"));
}

#[test]
fn missing_checkpoint_is_a_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let case = rank_case(4);
    let o = varscore(&[
        "score",
        "--structure",
        case.structure.to_str().unwrap(),
        "--checkpoint",
        dir.path().join("absent.json").to_str().unwrap(),
        "-o",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let o = varscore(&["score", "--structure", case.structure.to_str().unwrap(), "-o", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("checkpoint"));
}
