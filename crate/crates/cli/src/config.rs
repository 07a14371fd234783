//! Persisted run configuration. Every command writes the effective config to
//! its output directory so a run is reproducible from that file plus the seed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tsdh_core::nn::TrainConfig;

/// Default output directory when neither a flag nor the environment variable
/// is given.
pub const OUT_DIR_ENV: &str = "TSDH_OUT_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    pub source: Option<PathBuf>,
    pub col_a: Option<String>,
    pub col_b: Option<String>,
    pub stride: usize,
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub hidden: Vec<usize>,
    pub time_embed_dim: usize,
    pub train: TrainConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            source: None,
            col_a: None,
            col_b: None,
            stride: tsdh_core::data::WINDOW_LEN,
            t_steps: 1000,
            beta_start: 1e-4,
            beta_end: 1e-2,
            hidden: vec![512; 5],
            time_embed_dim: 64,
            train: TrainConfig::default(),
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Short content hash, stamped as a comment line into every emitted CSV.
    /// The output directory is excluded so reruns into different directories
    /// produce byte-identical files.
    pub fn hash(&self) -> String {
        let mut hashed = self.clone();
        hashed.out_dir = PathBuf::new();
        let json = serde_json::to_string(&hashed).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..6])
    }

    pub fn comment(&self) -> String {
        format!("config-hash: {}", self.hash())
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}
