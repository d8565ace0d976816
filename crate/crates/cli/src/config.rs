//! Run configuration: a TOML file, then `VARSCORE_*` environment
//! variables, then command-line flags, later sources winning.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use varscore::fitness::CurveConfig;
use varscore::ingest::IngestConfig;
use varscore::scorer::TrainConfig;
use varscore::variants::{EnvironmentMode, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Scorer checkpoint used by `score`, `rank`, `regress` and `confusion`.
    pub checkpoint: Option<PathBuf>,
    #[serde(with = "as_string")]
    pub environment: EnvironmentMode,
    pub strategy: Strategy,
    pub filter_wrong: bool,
    /// Self-score tolerance for positional tie clusters.
    pub epsilon: f64,
    pub recall_ranked_positions: bool,
    pub lambda: f64,
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub test_fraction: f64,
    /// Raw amino-acid index table; enables the `aa_index` embedding.
    pub aaindex: Option<PathBuf>,
    pub keep_intermediates: bool,
    /// Worker threads; defaults to the number of CPUs.
    pub jobs: Option<usize>,
    pub ingest: IngestConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let curve = CurveConfig::default();
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            checkpoint: None,
            environment: EnvironmentMode::Full,
            strategy: Strategy::Positional,
            filter_wrong: true,
            epsilon: 0.0,
            recall_ranked_positions: false,
            lambda: curve.lambda,
            sizes: curve.sizes,
            repeats: curve.repeats,
            test_fraction: curve.test_fraction,
            aaindex: None,
            keep_intermediates: false,
            jobs: None,
            ingest: IngestConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

mod as_string {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr<Err = String>,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

/// Comma-separated list such as `24,48,96`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeList(pub Vec<usize>);

impl std::str::FromStr for SizeList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|x| x.trim().parse::<usize>().map_err(|e| format!("bad size '{x}': {e}")))
            .collect::<Result<_, _>>()
            .map(SizeList)
    }
}

/// Flags shared by every subcommand; each overrides one config field.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, short = 'o', global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// `full` or `local:<radius>`.
    #[arg(long, global = true)]
    pub environment: Option<EnvironmentMode>,
    /// `global` or `positional`.
    #[arg(long, global = true)]
    pub strategy: Option<Strategy>,
    #[arg(long, global = true, conflicts_with = "no_filter_wrong")]
    pub filter_wrong: bool,
    #[arg(long, global = true)]
    pub no_filter_wrong: bool,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub recall_ranked_positions: bool,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Comma-separated training-set sizes.
    #[arg(long, global = true)]
    pub sizes: Option<SizeList>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    #[arg(long, global = true)]
    pub test_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub aaindex: Option<PathBuf>,
    #[arg(long, global = true)]
    pub keep_intermediates: bool,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub wt_reference: Option<f64>,
    #[arg(long, global = true)]
    pub coverage_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub endpoint_pdb: Option<String>,
    #[arg(long, global = true)]
    pub endpoint_af: Option<String>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
}

impl ConfigArgs {
    fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = &self.$flag { c.$($field).+ = v.clone(); })*
            };
        }
        set!(
            seed => seed,
            output_dir => output_dir,
            cache_dir => ingest.cache_dir,
            environment => environment,
            strategy => strategy,
            epsilon => epsilon,
            lambda => lambda,
            repeats => repeats,
            test_fraction => test_fraction,
            wt_reference => ingest.wt_reference,
            coverage_threshold => ingest.coverage_threshold,
            endpoint_pdb => ingest.endpoints.pdb,
            endpoint_af => ingest.endpoints.alphafold,
            epochs => train.epochs,
            learning_rate => train.learning_rate,
            batch_size => train.batch_size,
        );
        if let Some(SizeList(sizes)) = &self.sizes {
            c.sizes = sizes.clone();
        }
        if self.checkpoint.is_some() {
            c.checkpoint = self.checkpoint.clone();
        }
        if self.aaindex.is_some() {
            c.aaindex = self.aaindex.clone();
        }
        if self.jobs.is_some() {
            c.jobs = self.jobs;
        }
        if self.filter_wrong {
            c.filter_wrong = true;
        }
        if self.no_filter_wrong {
            c.filter_wrong = false;
        }
        if self.recall_ranked_positions {
            c.recall_ranked_positions = true;
        }
        if self.keep_intermediates {
            c.keep_intermediates = true;
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Builds the effective configuration and checks it.
    pub fn resolve(args: &ConfigArgs) -> Result<Self> {
        let mut config = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        config.ingest.apply_env();
        args.apply(&mut config);
        config.train.seed = config.seed;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.ingest.validate()?;
        for (name, path) in [("checkpoint", &self.checkpoint), ("aaindex", &self.aaindex)] {
            if let Some(p) = path {
                if !p.is_file() {
                    bail!("{name} file {} does not exist", p.display());
                }
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            bail!("epsilon must be finite and non-negative");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            bail!("lambda must be finite and non-negative");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be positive");
        }
        Ok(())
    }

    pub fn curve_config(&self) -> CurveConfig {
        CurveConfig {
            sizes: self.sizes.clone(),
            repeats: self.repeats,
            test_fraction: self.test_fraction,
            lambda: self.lambda,
            seed: self.seed,
        }
    }

    /// SHA-256 of the canonical JSON form, ignoring settings that cannot
    /// change results (output location, thread count).
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.jobs = None;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}
