//! Atomic file output with a `<file>.provenance.json` sidecar per artifact.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Everything needed to reproduce an artifact. No timestamps, so reruns
/// produce identical sidecars.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub checkpoint_hash: Option<String>,
    pub version: String,
    /// Input name → SHA-256 of its content.
    pub inputs: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Provenance {
            command: command.to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            checkpoint_hash: None,
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: BTreeMap::new(),
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    artifact: &'a str,
    sha256: String,
    #[serde(flatten)]
    provenance: &'a Provenance,
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".provenance.json");
    PathBuf::from(s)
}

pub struct Outputs {
    dir: PathBuf,
    pub provenance: Provenance,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path, provenance: Provenance) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            provenance,
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        atomic_write(&path, bytes)?;
        let sidecar = Sidecar {
            artifact: name,
            sha256: hex::encode(Sha256::digest(bytes)),
            provenance: &self.provenance,
        };
        let mut json = serde_json::to_string_pretty(&sidecar)?;
        json.push('\n');
        atomic_write(&sidecar_path(&path), json.as_bytes())?;
        log::info!("wrote {}", path.display());
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}
