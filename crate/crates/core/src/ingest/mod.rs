//! Data acquisition: DMS assays, structure retrieval with a local cache,
//! the synthetic residue-identity dataset and the on-disk RES format.

mod config;
mod dms;
mod fetch;
mod resdata;
mod synthetic;

pub use config::{Endpoints, IngestConfig, ENV_CACHE, ENV_ENDPOINT_AF, ENV_ENDPOINT_PDB};
pub use dms::{parse_dms, parse_dms_with_reference, parse_mutant_token, DmsAssay, DmsParseStats, DmsRecord, Taxon};
pub use fetch::{
    cache_path, coverage, fetch_structure, fetch_structure_with, FetchRequest, HttpClient, HttpError, ResolvedStructure,
    StructureSource, UreqClient,
};
pub use resdata::{load_res_dataset, write_res_dataset, ResDataset, RowError, TARGETS_FILE};
pub use synthetic::{apply_rigid, decode_label, generate_synthetic_res, label_composition, random_rotation};

use thiserror::Error;

use crate::structio::StructError;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("DMS row {row}: {message}")]
    Dms { row: usize, message: String },
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("network error for {url}: {message}")]
    Network { url: String, message: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("downloaded file {path} does not parse: {message}")]
    CorruptDownload { path: String, message: String },
    #[error("{id} covers {covered:.1}% of the requested positions (threshold {threshold:.1}%) and no fallback is configured")]
    Coverage { id: String, covered: f64, threshold: f64 },
    #[error("{failed} of {total} target rows failed to load")]
    Rows { failed: usize, total: usize },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Structure(#[from] StructError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
