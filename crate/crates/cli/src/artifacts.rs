//! Output layout, provenance and the checks that a stage's inputs exist.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;

pub const TOOL: &str = "hypersoc";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Provenance {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("provenance serializes")
    }

    /// Single-line form for `#` comment headers.
    pub fn comment(&self) -> String {
        format!("provenance: {}", serde_json::to_string(self).expect("provenance serializes"))
    }
}

/// A JSON artifact: provenance first, then the payload.
#[derive(Debug, Serialize, Deserialize)]
pub struct Stamped<T> {
    pub provenance: Provenance,
    #[serde(flatten)]
    pub body: T,
}

/// Where each command reads and writes.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Layout { root: root.to_path_buf() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn validation(&self) -> PathBuf {
        self.path("validation.json")
    }
    pub fn profiles(&self) -> PathBuf {
        self.path("profiles.jsonl")
    }
    pub fn embeddings(&self) -> PathBuf {
        self.path("embeddings.bin")
    }
    pub fn embeddings_text(&self) -> PathBuf {
        self.path("embeddings.txt")
    }
    pub fn embeddings_meta(&self) -> PathBuf {
        self.path("embeddings.meta.json")
    }
    pub fn hyperedges(&self) -> PathBuf {
        self.path("hypergraph.edges")
    }
    pub fn hypergraph_weights(&self) -> PathBuf {
        self.path("hypergraph.weights.json")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.path("model.ckpt")
    }
    pub fn history(&self) -> PathBuf {
        self.path("history.json")
    }
    pub fn split(&self) -> PathBuf {
        self.path("split.json")
    }
    pub fn report(&self) -> PathBuf {
        self.path("report.json")
    }
    pub fn report_csv(&self) -> PathBuf {
        self.path("report.csv")
    }
    pub fn ablation(&self) -> PathBuf {
        self.path("ablation.json")
    }
    pub fn ablation_csv(&self) -> PathBuf {
        self.path("ablation.csv")
    }
    pub fn sweep(&self) -> PathBuf {
        self.path("sweep.json")
    }
    pub fn sweep_csv(&self) -> PathBuf {
        self.path("sweep.csv")
    }
    pub fn stats(&self) -> PathBuf {
        self.path("stats.json")
    }
    pub fn plots(&self) -> PathBuf {
        self.path("plots")
    }
    pub fn gradcheck(&self) -> PathBuf {
        self.path("gradcheck.json")
    }
}

/// Fails with a pointer to the command that produces `path`.
pub fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!("{} not found; run {producer} first", path.display());
    }
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).with_context(|| format!("writing {}", path.display()))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Writes `# provenance` then whatever `body` produces.
pub fn write_with_comment(
    path: &Path,
    provenance: &Provenance,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# {}", provenance.comment())?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Warns when an input was produced under another configuration.
pub fn check_provenance(artifact: &Path, found: &Provenance, cfg: &RunConfig) {
    let expected = cfg.hash();
    if found.config_hash != expected {
        log::warn!(
            "{} was produced with config {} but the current config is {}; rerun `{}` to refresh it",
            artifact.display(),
            found.config_hash,
            expected,
            found.command
        );
    }
}
