//! Narrative embedders: a feature-hashing embedder and an external embedding service.

use std::time::Duration;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::features::Features;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    External,
    #[default]
    Hash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    pub dim: usize,
    /// OpenAI-style `/embeddings` URL, used by the external kind only.
    pub endpoint: String,
    pub model: String,
    pub token_env: String,
    pub batch_size: usize,
    pub timeout_secs: u64,
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec {
            kind: EmbedderKind::Hash,
            dim: 384,
            endpoint: "http://localhost:8000/v1/embeddings".into(),
            model: "all-MiniLM-L6-v2".into(),
            token_env: "HYPERSOC_EMBED_TOKEN".into(),
            batch_size: 64,
            timeout_secs: 60,
        }
    }
}

impl EmbedderSpec {
    pub fn hash(dim: usize) -> Self {
        EmbedderSpec { kind: EmbedderKind::Hash, dim, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Precondition("embedding dim must be at least 1".into()));
        }
        if self.kind == EmbedderKind::External && self.batch_size == 0 {
            return Err(Error::Precondition("embedding batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased maximal alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Signed token counts in `dim` buckets, L2-normalised. Bucket is `h % dim`,
/// sign is negative when the top bit of `h` is set. Returns `None` for text
/// without tokens.
pub fn hash_embed(text: &str, dim: usize) -> Option<Vec<f64>> {
    let mut row = vec![0.0; dim];
    let mut any = false;
    for tok in tokenize(text) {
        let h = fnv1a64(tok.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        row[(h % dim as u64) as usize] += sign;
        any = true;
    }
    if !any {
        return None;
    }
    // Colliding tokens can cancel out exactly, leaving a zero row.
    l2_normalize(&mut row);
    Some(row)
}

/// Returns false when the vector is all zeros and was left unchanged.
fn l2_normalize(row: &mut [f64]) -> bool {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    row.iter_mut().for_each(|v| *v /= norm);
    true
}

/// Embedding matrix plus the indices of rows that were left at zero.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub features: Features,
    pub zero_rows: Vec<usize>,
}

pub fn embed(spec: &EmbedderSpec, narratives: &[String]) -> Result<Embedding> {
    spec.validate()?;
    if narratives.is_empty() {
        return Err(Error::Precondition("no narratives to embed".into()));
    }
    let rows = match spec.kind {
        EmbedderKind::Hash => narratives.iter().map(|t| hash_embed(t, spec.dim)).collect(),
        EmbedderKind::External => external_embed(spec, narratives)?,
    };
    let mut out = Array2::zeros((narratives.len(), spec.dim));
    let mut zero_rows = Vec::new();
    for (i, row) in rows.into_iter().enumerate() {
        match row {
            Some(r) => out.row_mut(i).iter_mut().zip(r).for_each(|(o, v)| *o = v),
            None => {
                warn!("narrative {i} is empty; using a zero embedding row");
                zero_rows.push(i);
            }
        }
    }
    Ok(Embedding { features: Features::try_new(out)?, zero_rows })
}

fn external_embed(spec: &EmbedderSpec, narratives: &[String]) -> Result<Vec<Option<Vec<f64>>>> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(spec.timeout_secs)))
        .build()
        .into();
    let token = std::env::var(&spec.token_env).ok().filter(|t| !t.is_empty());
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; narratives.len()];
    let pending: Vec<usize> = (0..narratives.len())
        .filter(|&i| !narratives[i].trim().is_empty())
        .collect();
    for chunk in pending.chunks(spec.batch_size) {
        let inputs: Vec<&str> = chunk.iter().map(|&i| narratives[i].as_str()).collect();
        let mut req = agent.post(&spec.endpoint);
        if let Some(t) = &token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(json!({"model": spec.model, "input": inputs}))
            .map_err(|e| Error::Embedding(format!("{}: {e}", spec.endpoint)))?;
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Embedding(format!("decoding response: {e}")))?;
        let vectors = parse_embedding_response(&body, chunk.len(), spec.dim)?;
        for (&i, mut v) in chunk.iter().zip(vectors) {
            if !l2_normalize(&mut v) {
                warn!("embedding service returned a zero vector for narrative {i}");
            }
            rows[i] = Some(v);
        }
    }
    Ok(rows)
}

/// Vectors from `data[i].embedding`, ordered by `data[i].index` when present.
pub fn parse_embedding_response(body: &Value, expected: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Embedding("response has no data array".into()))?;
    if data.len() != expected {
        return Err(Error::Embedding(format!(
            "expected {expected} embeddings, got {}",
            data.len()
        )));
    }
    let mut out = vec![Vec::new(); expected];
    for (pos, item) in data.iter().enumerate() {
        let idx = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
        let vec = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Embedding(format!("item {pos} has no embedding")))?;
        let v: Vec<f64> = vec
            .iter()
            .map(|x| x.as_f64().filter(|f| f.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Embedding(format!("item {pos} has a non-numeric value")))?;
        if v.len() != dim {
            return Err(Error::Embedding(format!(
                "item {pos} has dimension {}, expected {dim}",
                v.len()
            )));
        }
        let slot = out
            .get_mut(idx)
            .ok_or_else(|| Error::Embedding(format!("index {idx} out of range")))?;
        *slot = v;
    }
    if out.iter().any(Vec::is_empty) {
        return Err(Error::Embedding("duplicate indices in response".into()));
    }
    Ok(out)
}
