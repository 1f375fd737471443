//! Binary checkpoints: `SNNC`, a little-endian `u32` header length, a JSON
//! header describing the layers, then every weight as little-endian `f32`
//! (feed-forward then recurrent, layer by layer).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{to_f32_grid, Layer, LayerSpec, Shape};
use super::model::{SnnModel, SpikeStats};
use super::neuron::CubaParams;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SNNC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerHeader {
    spec: LayerSpec,
    neuron: Option<CubaParams>,
    weights: usize,
    recurrent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delays: Option<Vec<u8>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    architecture: String,
    input: Shape,
    classes: usize,
    timesteps: usize,
    init_gain: f64,
    layers: Vec<LayerHeader>,
    #[serde(default)]
    stats: SpikeStats,
}

pub fn encode_checkpoint(model: &SnnModel) -> Result<Vec<u8>> {
    model.validate()?;
    let header = Header {
        format_version: CHECKPOINT_VERSION,
        architecture: model.architecture.clone(),
        input: model.input,
        classes: model.classes,
        timesteps: model.timesteps,
        init_gain: model.init_gain,
        layers: model
            .layers
            .iter()
            .map(|l| LayerHeader {
                spec: l.spec,
                neuron: l.neuron,
                weights: l.weights.len(),
                recurrent: l.recurrent.len(),
                delays: l.delays.clone(),
            })
            .collect(),
        stats: model.stats.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let n_weights: usize = model
        .layers
        .iter()
        .map(|l| l.weights.len() + l.recurrent.len())
        .sum();
    let mut out = Vec::with_capacity(8 + json.len() + 4 * n_weights);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for layer in &model.layers {
        for &w in layer.weights.iter().chain(&layer.recurrent) {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<SnnModel> {
    let bad = |reason: String| Error::format(path, reason);
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing SNNC magic".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = bytes
        .get(8..8 + header_len)
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let mut blob = bytes[8 + header_len..].chunks_exact(4);
    let expected: usize = header.layers.iter().map(|l| l.weights + l.recurrent).sum();
    if blob.len() != expected || !blob.remainder().is_empty() {
        return Err(bad(format!(
            "weight blob holds {} bytes, header describes {} weights",
            bytes.len() - 8 - header_len,
            expected
        )));
    }
    let mut take = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| {
                f32::from_le_bytes(
                    blob.next()
                        .expect("length checked")
                        .try_into()
                        .expect("4 bytes"),
                ) as f64
            })
            .collect()
    };
    let layers = header
        .layers
        .into_iter()
        .map(|h| Layer {
            spec: h.spec,
            neuron: h.neuron,
            weights: take(h.weights),
            recurrent: take(h.recurrent),
            delays: h.delays,
        })
        .collect();
    let model = SnnModel {
        architecture: header.architecture,
        input: header.input,
        classes: header.classes,
        timesteps: header.timesteps,
        init_gain: header.init_gain,
        layers,
        stats: header.stats,
    };
    model
        .validate()
        .map_err(|e| bad(format!("inconsistent model: {e}")))?;
    Ok(model)
}

pub fn save_checkpoint(model: &SnnModel, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<SnnModel> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// True when every weight survives the `f32` round trip unchanged.
pub fn is_f32_exact(model: &SnnModel) -> bool {
    model
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.recurrent))
        .all(|&w| to_f32_grid(w) == w)
}
