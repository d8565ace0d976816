//! Structure retrieval with an on-disk cache.
//!
//! Files live at `<cache>/<kind>/<id>.pdb` next to a `<id>.pdb.json`
//! sidecar holding the source URL, fetch time and SHA-256 of the content.
//! Concurrent fetches of one id are serialized by a `<id>.pdb.lock` file.

use std::fs::OpenOptions;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{IngestConfig, IngestError};
use crate::structio::{parse_structure, Position, StructureFormat};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StructureSource {
    Experimental { pdb_id: String, assembly: u32 },
    Predicted { uniprot_id: String },
    Local { path: PathBuf },
}

impl StructureSource {
    /// Parses `pdb:1ABC`, `pdb:1ABC:2`, `af:P12345` or a file path.
    pub fn parse(spec: &str) -> StructureSource {
        if let Some(rest) = spec.strip_prefix("pdb:") {
            let (id, assembly) = match rest.split_once(':') {
                Some((id, a)) => (id, a.parse().unwrap_or(1)),
                None => (rest, 1),
            };
            StructureSource::Experimental {
                pdb_id: id.to_string(),
                assembly,
            }
        } else if let Some(rest) = spec.strip_prefix("af:") {
            StructureSource::Predicted {
                uniprot_id: rest.to_string(),
            }
        } else {
            StructureSource::Local { path: PathBuf::from(spec) }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StructureSource::Experimental { .. } => "pdb",
            StructureSource::Predicted { .. } => "alphafold",
            StructureSource::Local { .. } => "local",
        }
    }

    pub fn id(&self) -> String {
        match self {
            StructureSource::Experimental { pdb_id, assembly } => format!("{}-{assembly}", pdb_id.to_ascii_uppercase()),
            StructureSource::Predicted { uniprot_id } => uniprot_id.to_ascii_uppercase(),
            StructureSource::Local { path } => path.display().to_string(),
        }
    }

    fn url(&self, config: &IngestConfig) -> Option<String> {
        match self {
            StructureSource::Experimental { pdb_id, assembly } => Some(
                config
                    .endpoints
                    .pdb
                    .replace("{id}", &pdb_id.to_ascii_uppercase())
                    .replace("{assembly}", &assembly.to_string()),
            ),
            StructureSource::Predicted { uniprot_id } => {
                Some(config.endpoints.alphafold.replace("{id}", &uniprot_id.to_ascii_uppercase()))
            }
            StructureSource::Local { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchRequest {
    pub source: StructureSource,
    /// Used when the primary source does not cover enough positions.
    pub fallback: Option<StructureSource>,
    /// Positions the structure must cover (usually the assay's); none means no check.
    pub required_positions: Vec<Position>,
}

impl FetchRequest {
    pub fn new(source: StructureSource) -> Self {
        FetchRequest {
            source,
            fallback: None,
            required_positions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedStructure {
    pub source: StructureSource,
    pub path: PathBuf,
    pub from_cache: bool,
    pub fallback_used: bool,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HttpError {
    NotFound,
    /// Worth retrying: transport failures and server errors.
    Transient(String),
    Fatal(String),
}

pub trait HttpClient: Sync {
    fn get(&self, url: &str) -> Result<Vec<u8>, HttpError>;
}

pub struct UreqClient {
    agent: ureq::Agent,
}

impl UreqClient {
    pub fn new(timeout: Duration) -> Self {
        UreqClient {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl HttpClient for UreqClient {
    fn get(&self, url: &str) -> Result<Vec<u8>, HttpError> {
        match self.agent.get(url).call() {
            Ok(resp) => {
                let mut body = Vec::new();
                resp.into_reader()
                    .read_to_end(&mut body)
                    .map_err(|e| HttpError::Transient(e.to_string()))?;
                Ok(body)
            }
            Err(ureq::Error::Status(404, _)) => Err(HttpError::NotFound),
            Err(ureq::Error::Status(code, _)) if code >= 500 || code == 429 => {
                Err(HttpError::Transient(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) => Err(HttpError::Fatal(format!("HTTP {code}"))),
            Err(e) => Err(HttpError::Transient(e.to_string())),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    url: String,
    fetched_at: u64,
    sha256: String,
    bytes: usize,
}

pub fn cache_path(config: &IngestConfig, source: &StructureSource) -> PathBuf {
    config.cache_dir.join(source.kind()).join(format!("{}.pdb", source.id()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(path: PathBuf, timeout: Duration) -> Result<LockGuard, IngestError> {
        let start = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(_) => return Ok(LockGuard(path)),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if start.elapsed() > timeout {
                        return Err(IngestError::Io(std::io::Error::new(
                            std::io::ErrorKind::TimedOut,
                            format!("cache lock {} held too long", path.display()),
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(50));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn download<C: HttpClient + ?Sized>(client: &C, url: &str, config: &IngestConfig) -> Result<Vec<u8>, IngestError> {
    let mut delay = Duration::from_millis(config.backoff_ms);
    let mut last = String::new();
    for attempt in 1..=config.retries {
        match client.get(url) {
            Ok(body) => return Ok(body),
            Err(HttpError::Fatal(m)) => {
                return Err(IngestError::Network {
                    url: url.into(),
                    message: m,
                })
            }
            Err(HttpError::NotFound) => last = "404".into(),
            Err(HttpError::Transient(m)) => last = m,
        }
        log::warn!("GET {url} failed (attempt {attempt}/{}): {last}", config.retries);
        if attempt < config.retries {
            std::thread::sleep(delay);
            delay *= 2;
        }
    }
    if last == "404" {
        Err(IngestError::NotFound(url.into()))
    } else {
        Err(IngestError::Network {
            url: url.into(),
            message: last,
        })
    }
}

/// Fraction of `required` positions with a Cα in the structure.
pub fn coverage(content: &[u8], required: &[Position]) -> Result<f64, IngestError> {
    if required.is_empty() {
        return Ok(1.0);
    }
    let atoms = parse_structure(content, StructureFormat::Pdb)?;
    let chain = atoms[0].chain_id;
    let present: std::collections::HashSet<Position> = atoms
        .iter()
        .filter(|a| a.is_ca() && a.chain_id == chain)
        .map(|a| a.residue_index)
        .collect();
    let covered = required.iter().filter(|p| present.contains(p)).count();
    Ok(covered as f64 / required.len() as f64)
}

/// Returns the cached file for `source`, downloading it first when absent.
fn resolve_one<C: HttpClient + ?Sized>(
    client: &C,
    source: &StructureSource,
    config: &IngestConfig,
) -> Result<(PathBuf, bool), IngestError> {
    let Some(url) = source.url(config) else {
        let StructureSource::Local { path } = source else { unreachable!() };
        let bytes = std::fs::read(path)?;
        parse_structure(&bytes, StructureFormat::Pdb).map_err(|e| IngestError::CorruptDownload {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        return Ok((path.clone(), false));
    };
    let path = cache_path(config, source);
    if path.exists() {
        log::debug!("cache hit {}", path.display());
        return Ok((path, true));
    }
    std::fs::create_dir_all(path.parent().expect("cache path has a parent"))?;
    let _lock = LockGuard::acquire(with_suffix(&path, ".lock"), Duration::from_secs(config.timeout_secs * 2))?;
    if path.exists() {
        return Ok((path, true));
    }
    let body = download(client, &url, config)?;
    parse_structure(&body, StructureFormat::Pdb).map_err(|e| IngestError::CorruptDownload {
        path: url.clone(),
        message: e.to_string(),
    })?;
    let tmp = with_suffix(&path, ".part");
    std::fs::write(&tmp, &body)?;
    let sidecar = Sidecar {
        url,
        fetched_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        sha256: hex::encode(Sha256::digest(&body)),
        bytes: body.len(),
    };
    std::fs::write(
        with_suffix(&path, ".json"),
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )?;
    std::fs::rename(&tmp, &path)?;
    Ok((path, false))
}

/// Resolves a structure, falling back to the predicted source when the
/// experimental file covers less than the configured fraction of positions.
pub fn fetch_structure_with<C: HttpClient + ?Sized>(
    client: &C,
    request: &FetchRequest,
    config: &IngestConfig,
) -> Result<ResolvedStructure, IngestError> {
    let (path, from_cache) = resolve_one(client, &request.source, config)?;
    let covered = coverage(&std::fs::read(&path)?, &request.required_positions)?;
    if covered >= config.coverage_threshold {
        return Ok(ResolvedStructure {
            source: request.source.clone(),
            path,
            from_cache,
            fallback_used: false,
            coverage: covered,
        });
    }
    let Some(fallback) = &request.fallback else {
        return Err(IngestError::Coverage {
            id: request.source.id(),
            covered: covered * 100.0,
            threshold: config.coverage_threshold * 100.0,
        });
    };
    log::info!(
        "{} covers {:.1}% of positions; using {} {}",
        request.source.id(),
        covered * 100.0,
        fallback.kind(),
        fallback.id()
    );
    let (path, from_cache) = resolve_one(client, fallback, config)?;
    let fallback_coverage = coverage(&std::fs::read(&path)?, &request.required_positions)?;
    Ok(ResolvedStructure {
        source: fallback.clone(),
        path,
        from_cache,
        fallback_used: true,
        coverage: fallback_coverage,
    })
}

pub fn fetch_structure(request: &FetchRequest, config: &IngestConfig) -> Result<ResolvedStructure, IngestError> {
    let client = UreqClient::new(Duration::from_secs(config.timeout_secs));
    fetch_structure_with(&client, request, config)
}
