//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hypersoc_core::domain::Scheme;
use hypersoc_core::enhance::{ChatClientConfig, EmbedderSpec, EnhanceOptions};
use hypersoc_core::envgen::HyperedgeSpec;
use hypersoc_core::eval::{FeatureSource, DEFAULT_FRACTIONS};
use hypersoc_core::hgnn::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub users: PathBuf,
    pub edges: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            users: PathBuf::from("data/users.jsonl"),
            edges: PathBuf::from("data/edges.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSettings {
    pub n_reps: usize,
    pub fractions: Vec<f64>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            n_reps: 5,
            fractions: DEFAULT_FRACTIONS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradCheckSettings {
    pub epsilon: f64,
    pub samples: usize,
    /// The command fails when the maximum relative error exceeds this.
    pub threshold: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings {
            epsilon: 1e-5,
            samples: 100,
            threshold: 1e-4,
        }
    }
}

/// Everything a pipeline run depends on. `train.seed` always mirrors `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub scheme: Scheme,
    pub features: FeatureSource,
    /// Mock client and hash embedder regardless of the settings below.
    pub offline: bool,
    pub data: DataConfig,
    pub hyperedges: HyperedgeSpec,
    pub embedder: EmbedderSpec,
    pub llm: ChatClientConfig,
    pub enhance: EnhanceOptions,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub gradcheck: GradCheckSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("hypersoc-out"),
            scheme: Scheme::Mbti16,
            features: FeatureSource::Enhanced,
            offline: false,
            data: DataConfig::default(),
            hyperedges: HyperedgeSpec::default(),
            embedder: EmbedderSpec::default(),
            llm: ChatClientConfig::default(),
            enhance: EnhanceOptions::default(),
            train: TrainConfig::default(),
            eval: EvalSettings::default(),
            gradcheck: GradCheckSettings::default(),
        }
    }
}

/// Values given on the command line; `None` leaves the config value in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub offline: bool,
    pub scheme: Option<Scheme>,
    pub features: Option<FeatureSource>,
    pub data_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parses TOML; relative paths are taken from the file's directory.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).context("invalid configuration")?;
        for p in [&mut cfg.data.users, &mut cfg.data.edges, &mut cfg.out] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let base = p.parent().unwrap_or(Path::new("."));
                Self::from_toml(&text, base).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if o.offline {
            self.offline = true;
        }
        if let Some(s) = o.scheme {
            self.scheme = s;
        }
        if let Some(f) = o.features {
            self.features = f;
        }
        if let Some(dir) = &o.data_dir {
            let (users, edges) = hypersoc_core::ingest::dataset_paths(dir);
            self.data = DataConfig { users, edges };
        }
        self.train.seed = self.seed;
        self
    }

    /// Embedder actually used: offline runs always hash.
    pub fn effective_embedder(&self) -> EmbedderSpec {
        if self.offline {
            EmbedderSpec::hash(self.embedder.dim)
        } else {
            self.embedder.clone()
        }
    }

    /// First 16 hex digits of SHA-256 over the JSON form, with `out` blanked so
    /// the same run in another directory hashes the same.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
