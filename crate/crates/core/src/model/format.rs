// SPDX-License-Identifier: MIT OR Apache-2.0

//! Checkpoint file format.
//!
//! ```text
//! bytes 0..8    magic "TPROBE01"
//! bytes 8..12   u32 LE manifest length N
//! bytes 12..12+N  UTF-8 JSON manifest {config, tensors: [{name, dtype, shape, offset, length}]}
//! rest          payload: row-major little-endian f32 blobs
//! ```
//!
//! `offset` and `length` are byte counts relative to the start of the
//! payload. Writers emit tensors contiguously in canonical name order, so a
//! save/load/save cycle is byte-identical.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checkpoint::{expected_shape, tensor_names, Checkpoint};
use super::config::ModelConfig;
use crate::error::{FormatError, Result};
use crate::report::io::write_atomic;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"TPROBE01";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub length: usize,
}

/// Encode a checkpoint to bytes.
pub fn to_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut entries = Vec::new();
    let mut payload = Vec::new();
    for (name, t) in ckpt.named_tensors() {
        let offset = payload.len();
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(TensorEntry {
            name,
            dtype: "f32".into(),
            shape: t.shape().to_vec(),
            offset,
            length: payload.len() - offset,
        });
    }
    let manifest = Manifest {
        config: ckpt.config().clone(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(HEADER_LEN + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

/// Split a file into its manifest and payload without validating tensors.
pub fn read_manifest(bytes: &[u8]) -> std::result::Result<(Manifest, &[u8]), FormatError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(FormatError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let declared = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let available = bytes.len() - HEADER_LEN;
    if declared > available {
        return Err(FormatError::ManifestLength {
            declared,
            available,
        });
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[HEADER_LEN..HEADER_LEN + declared])
        .map_err(|e| FormatError::Manifest(e.to_string()))?;
    Ok((manifest, &bytes[HEADER_LEN + declared..]))
}

/// Decode a checkpoint, reporting each corruption class distinctly.
pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Checkpoint, FormatError> {
    let (manifest, payload) = read_manifest(bytes)?;
    let cfg = manifest.config;
    cfg.validate()
        .map_err(|e| FormatError::Manifest(e.to_string()))?;

    let mut by_name: BTreeMap<&str, &TensorEntry> = BTreeMap::new();
    for e in &manifest.tensors {
        if by_name.insert(&e.name, e).is_some() {
            return Err(FormatError::Manifest(format!("duplicate tensor `{}`", e.name)));
        }
    }
    let names = tensor_names(&cfg);
    for n in &names {
        if !by_name.contains_key(n.as_str()) {
            return Err(FormatError::Manifest(format!("missing tensor `{n}`")));
        }
    }
    if let Some(extra) = by_name.keys().find(|k| expected_shape(&cfg, k).is_none()) {
        return Err(FormatError::Manifest(format!("unexpected tensor `{extra}`")));
    }

    for e in &manifest.tensors {
        if e.dtype != "f32" {
            return Err(FormatError::Manifest(format!(
                "tensor `{}` has unsupported dtype `{}`",
                e.name, e.dtype
            )));
        }
        let values: usize = e.shape.iter().product();
        if values * 4 != e.length {
            return Err(FormatError::Shape {
                tensor: e.name.clone(),
                detail: format!(
                    "shape {:?} holds {} bytes but length is {}",
                    e.shape,
                    values * 4,
                    e.length
                ),
            });
        }
        let want = expected_shape(&cfg, &e.name).expect("checked above");
        if e.shape != want {
            return Err(FormatError::Shape {
                tensor: e.name.clone(),
                detail: format!("shape {:?} does not match config shape {want:?}", e.shape),
            });
        }
    }

    let needed: usize = manifest.tensors.iter().map(|e| e.length).sum();
    if payload.len() < needed {
        return Err(FormatError::Truncated {
            needed,
            available: payload.len(),
        });
    }
    let offset_err = |e: &TensorEntry| FormatError::Offset {
        tensor: e.name.clone(),
        offset: e.offset,
        length: e.length,
        payload: payload.len(),
    };
    let mut spans: Vec<&TensorEntry> = manifest.tensors.iter().collect();
    spans.sort_by_key(|e| (e.offset, e.name.clone()));
    let mut end = 0usize;
    for e in spans {
        let stop = e.offset.checked_add(e.length).ok_or_else(|| offset_err(e))?;
        if e.offset % 4 != 0 || stop > payload.len() || e.offset < end {
            return Err(offset_err(e));
        }
        end = stop;
    }

    let tensors = manifest.tensors.iter().map(|e| {
        let data = payload[e.offset..e.offset + e.length]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let t = Tensor::new(e.shape.clone(), data).expect("length checked");
        (e.name.clone(), t)
    });
    Checkpoint::from_named(cfg, tensors).map_err(|e| FormatError::Manifest(e.to_string()))
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &to_bytes(ckpt))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    Ok(from_bytes(&bytes)?)
}
