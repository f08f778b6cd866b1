//! Checkpoint container.
//!
//! Layout: the 8-byte magic `MSEGCKPT`, a little-endian `u64` header length,
//! a JSON header (format version, precision, network config, tensor names and
//! shapes), then each tensor's values as little-endian floats in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelError, ModelParams, PointNetConfig};
use crate::tensor::{ParamStore, Precision, Scalar, Tensor};

const MAGIC: &[u8; 8] = b"MSEGCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub precision: Precision,
    pub config: PointNetConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint<T: Scalar>(model: &ModelParams<T>) -> Result<Vec<u8>, ModelError> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        precision: T::PRECISION,
        config: model.config.clone(),
        tensors: model
            .params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header = serde_json::to_vec_pretty(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + header.len() + model.param_count() * T::PRECISION.byte_width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for (_, t) in model.params.iter() {
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

/// Parses and validates the header, returning it with the payload offset.
pub fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, usize), ModelError> {
    let bad = |m: &str| ModelError::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize.checked_add(len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[16..end]).map_err(|e| ModelError::Checkpoint(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    Ok((header, end))
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<ModelParams<T>, ModelError> {
    let (header, mut offset) = read_header(bytes)?;
    if header.precision != T::PRECISION {
        return Err(ModelError::Precision {
            stored: header.precision,
            requested: T::PRECISION,
        });
    }
    let width = T::PRECISION.byte_width();
    let mut params = ParamStore::new();
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let end = offset + n * width;
        let chunk = bytes
            .get(offset..end)
            .ok_or_else(|| ModelError::Checkpoint(format!("truncated data for `{}`", entry.name)))?;
        let data = chunk.chunks_exact(width).map(T::read_le).collect();
        params.insert(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
        offset = end;
    }
    if offset != bytes.len() {
        return Err(ModelError::Checkpoint("trailing bytes after parameters".into()));
    }
    let model = ModelParams {
        config: header.config,
        params,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &ModelParams<T>) -> Result<(), ModelError> {
    fs::write(path, encode_checkpoint(model)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ModelParams<T>, ModelError> {
    decode_checkpoint(&fs::read(path)?)
}

/// Reads only the header, e.g. to pick the precision before loading.
pub fn peek_checkpoint(path: &Path) -> Result<CheckpointHeader, ModelError> {
    let bytes = fs::read(path)?;
    Ok(read_header(&bytes)?.0)
}
