use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::IngestError;

pub const ENV_CACHE: &str = "VARSCORE_CACHE";
pub const ENV_ENDPOINT_PDB: &str = "VARSCORE_ENDPOINT_PDB";
pub const ENV_ENDPOINT_AF: &str = "VARSCORE_ENDPOINT_AF";

/// URL templates. `{id}` and `{assembly}` are substituted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Endpoints {
    pub pdb: String,
    pub alphafold: String,
}

impl Default for Endpoints {
    fn default() -> Self {
        Endpoints {
            pdb: "https://files.rcsb.org/download/{id}.pdb{assembly}".into(),
            alphafold: "https://alphafold.ebi.ac.uk/files/AF-{id}-F1-model_v4.pdb".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub cache_dir: PathBuf,
    pub endpoints: Endpoints,
    /// Minimum fraction of requested positions an experimental structure must cover.
    pub coverage_threshold: f64,
    /// Wildtype fitness reference for assays that do not declare one.
    pub wt_reference: f64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            cache_dir: PathBuf::from(".varscore-cache"),
            endpoints: Endpoints::default(),
            coverage_threshold: 0.95,
            wt_reference: 0.0,
            retries: 3,
            backoff_ms: 500,
            timeout_secs: 60,
        }
    }
}

impl IngestConfig {
    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        let config: IngestConfig = toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Overrides fields from `VARSCORE_*` environment variables.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var(ENV_CACHE) {
            self.cache_dir = PathBuf::from(v);
        }
        if let Ok(v) = std::env::var(ENV_ENDPOINT_PDB) {
            self.endpoints.pdb = v;
        }
        if let Ok(v) = std::env::var(ENV_ENDPOINT_AF) {
            self.endpoints.alphafold = v;
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if !(0.0..=1.0).contains(&self.coverage_threshold) {
            return Err(IngestError::Config(format!(
                "coverage_threshold {} outside [0, 1]",
                self.coverage_threshold
            )));
        }
        if self.retries == 0 {
            return Err(IngestError::Config("retries must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_overrides_defaults() {
        let c = IngestConfig::from_toml("cache_dir = \"/tmp/x\"\ncoverage_threshold = 0.8\n[endpoints]\npdb = \"http://h/{id}\"\n").unwrap();
        assert_eq!(c.cache_dir, PathBuf::from("/tmp/x"));
        assert_eq!(c.coverage_threshold, 0.8);
        assert_eq!(c.endpoints.pdb, "http://h/{id}");
        assert_eq!(c.endpoints.alphafold, Endpoints::default().alphafold);
        assert!(IngestConfig::from_toml("coverage_threshold = 1.5").is_err());
    }
}
