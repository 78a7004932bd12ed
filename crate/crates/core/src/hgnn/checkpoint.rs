//! Versioned binary checkpoint.
//!
//! ```text
//! magic    b"HGNNCKPT"
//! version  u32 LE
//! header   u32 LE length + JSON (architecture, provenance)
//! table    u32 LE count, then per block: u16 LE name length, name, u64 LE rows, u64 LE cols
//! data     every block in table order, row-major f64 LE
//! ```

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{Architecture, HgnnModel, LayerParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"HGNNCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

fn named_blocks<S: Scalar>(model: &HgnnModel<S>) -> Vec<(String, &Array2<S>)> {
    let mut out = Vec::new();
    for (l, layer) in model.layers.iter().enumerate() {
        out.push((format!("layer{l}.theta"), &layer.theta));
        if let Some(s) = &layer.skip {
            out.push((format!("layer{l}.skip"), s));
        }
        out.push((format!("layer{l}.bn_scale"), &layer.bn_scale));
        out.push((format!("layer{l}.bn_shift"), &layer.bn_shift));
        out.push((format!("layer{l}.bn_mean"), &layer.running_mean));
        out.push((format!("layer{l}.bn_var"), &layer.running_var));
    }
    out.push(("head.weight".into(), &model.head_weight));
    out.push(("head.bias".into(), &model.head_bias));
    out
}

pub fn write_checkpoint<S: Scalar, W: Write>(
    model: &HgnnModel<S>,
    provenance: serde_json::Value,
    mut w: W,
) -> Result<()> {
    let io = |e: std::io::Error| Error::Format(format!("writing checkpoint: {e}"));
    let header = serde_json::to_vec(&CheckpointHeader {
        architecture: model.arch,
        provenance,
    })?;
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(header.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    let blocks = named_blocks(model);
    w.write_all(&(blocks.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, b) in &blocks {
        w.write_all(&(name.len() as u16).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_all(&(b.nrows() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&(b.ncols() as u64).to_le_bytes()).map_err(io)?;
    }
    for (_, b) in &blocks {
        for v in b.iter() {
            w.write_all(&v.as_f64().to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

fn read_exact<R: Read, const K: usize>(r: &mut R) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint<S: Scalar, R: Read>(mut r: R) -> Result<(HgnnModel<S>, CheckpointHeader)> {
    let magic: [u8; 8] = read_exact(&mut r)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let header_len = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("truncated checkpoint header: {e}")))?;
    let header: CheckpointHeader = serde_json::from_slice(&header)?;

    let count = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u16::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| Error::Format(format!("truncated shape table: {e}")))?;
        let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
        let rows = u64::from_le_bytes(read_exact(&mut r)?) as usize;
        let cols = u64::from_le_bytes(read_exact(&mut r)?) as usize;
        table.push((name, rows, cols));
    }
    let mut blocks = std::collections::HashMap::new();
    for (name, rows, cols) in table {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(S::of(f64::from_le_bytes(read_exact(&mut r)?)));
        }
        let a = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Shape(e.to_string()))?;
        blocks.insert(name, a);
    }
    let mut take = |name: String| {
        blocks
            .remove(&name)
            .ok_or_else(|| Error::Format(format!("checkpoint is missing block {name}")))
    };

    let arch = header.architecture;
    let mut layers = Vec::with_capacity(arch.num_layers);
    let mut d_in = arch.input_dim;
    for l in 0..arch.num_layers {
        let theta = take(format!("layer{l}.theta"))?;
        let skip = if d_in != arch.hidden_dim {
            Some(take(format!("layer{l}.skip"))?)
        } else {
            None
        };
        layers.push(LayerParams {
            theta,
            skip,
            bn_scale: take(format!("layer{l}.bn_scale"))?,
            bn_shift: take(format!("layer{l}.bn_shift"))?,
            running_mean: take(format!("layer{l}.bn_mean"))?,
            running_var: take(format!("layer{l}.bn_var"))?,
        });
        d_in = arch.hidden_dim;
    }
    let model = HgnnModel {
        arch,
        layers,
        head_weight: take("head.weight".into())?,
        head_bias: take("head.bias".into())?,
    };
    if model.layers.iter().any(|l| l.input_dim() == 0) {
        return Err(Error::Format("checkpoint has an empty layer".into()));
    }
    Ok((model, header))
}
