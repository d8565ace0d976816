//! `varscore` command-line pipeline: fetch structures, train the scorer,
//! score and rank variants, evaluate rankings and fit learning curves.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use std::time::Duration;

use anyhow::Result;
use clap::{Parser, Subcommand};
use varscore::ingest::UreqClient;

pub use commands::Outcome;
use commands::*;
pub use config::{ConfigArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "varscore", version, about = "Structure-based ranking of single-point protein variants")]
pub struct Cli {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Download (or reuse cached) structures and write a manifest.
    Fetch(FetchArgs),
    /// Build the atomic radius graph of a structure.
    Graph(GraphArgs),
    /// Train the residue-identity scorer.
    TrainRes(TrainArgs),
    /// Score every residue of a structure.
    Score(ScoreArgs),
    /// Rank an assay's mutations and evaluate the ranking.
    Rank(RankArgs),
    /// Evaluate an existing ranking against an assay.
    Evaluate(EvaluateArgs),
    /// Fit baseline and score-augmented ridge learning curves.
    Regress(RegressArgs),
    /// Confusion matrix of the scorer and its agreement with BLOSUM62.
    Confusion(ConfusionArgs),
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let config = RunConfig::resolve(&cli.config)?;
    if let Some(jobs) = config.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match &cli.command {
        Command::Fetch(a) => {
            let client = UreqClient::new(Duration::from_secs(config.ingest.timeout_secs));
            cmd_fetch(&config, a, &client)
        }
        Command::Graph(a) => cmd_graph(&config, a),
        Command::TrainRes(a) => cmd_train_res(&config, a).map(|r| r.0),
        Command::Score(a) => cmd_score(&config, a),
        Command::Rank(a) => cmd_rank(&config, a).map(|r| r.0),
        Command::Evaluate(a) => cmd_evaluate(&config, a).map(|r| r.0),
        Command::Regress(a) => cmd_regress(&config, a),
        Command::Confusion(a) => cmd_confusion(&config, a).map(|r| r.0),
    }
}
