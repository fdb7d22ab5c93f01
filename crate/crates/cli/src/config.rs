use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Emit {
    #[serde(default = "yes")]
    pub csv: bool,
    #[serde(default = "yes")]
    pub json: bool,
}

impl Default for Emit {
    fn default() -> Self {
        Self { csv: true, json: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    /// Per-experiment keys; missing keys take the experiment defaults.
    #[serde(default)]
    pub params: Value,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Replicas per sample set; `None` uses the catalog default.
    #[serde(default)]
    pub n_samples: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit: Emit,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let c: Self = serde_json::from_str(&text).map_err(|e| format!("malformed config {}: {e}", path.display()))?;
        if c.seeds.is_empty() {
            return Err("config lists no seeds".into());
        }
        Ok(c)
    }

    /// Hash of everything that determines the sampled values, seeds excluded
    /// (the cache key carries the seed). Names the checkpoint directory.
    pub fn sampling_hash(&self) -> String {
        let key = serde_json::json!({
            "experiment": self.experiment,
            "params": self.params,
            "n_samples": self.n_samples,
            "version": env!("CARGO_PKG_VERSION"),
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
