//! Binary checkpoint files.
//!
//! Layout: the 8-byte magic `RCAPCKPT`, a little-endian `u64` header length,
//! a JSON header, then every parameter as little-endian `f64` in the order
//! the header lists them.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::encoders::ModalityDims;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::train::{Checkpoint, RngState, TrainConfig};

pub const MAGIC: &[u8; 8] = b"RCAPCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: TrainConfig,
    pub dims: ModalityDims,
    pub tensors: Vec<TensorEntry>,
    pub rng: RngState,
    pub epoch: usize,
}

impl CheckpointHeader {
    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum()
    }
}

pub fn write_checkpoint(mut w: impl Write, ck: &Checkpoint) -> Result<()> {
    let tensors = ck.model.tensors();
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        config: ck.config.clone(),
        dims: ck.model.spec.dims,
        tensors: ck
            .model
            .tensor_names()
            .into_iter()
            .zip(&tensors)
            .map(|(name, t)| TensorEntry { name, shape: t.shape().to_vec() })
            .collect(),
        rng: ck.rng.clone(),
        epoch: ck.epoch,
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * header.num_values());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for t in tensors {
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn truncated(what: &str) -> Error {
    Error::Checkpoint(format!("truncated checkpoint: missing {what}"))
}

fn read_header_from(r: &mut impl Read) -> Result<CheckpointHeader> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| truncated("magic"))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| truncated("header length"))?;
    let len = u64::from_le_bytes(len);
    let mut json = Vec::new();
    r.take(len).read_to_end(&mut json)?;
    if json.len() as u64 != len {
        return Err(truncated("header"));
    }
    let version: serde_json::Value = serde_json::from_slice(&json)
        .map_err(|e| Error::Checkpoint(format!("unreadable header: {e}")))?;
    match version.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {v}, expected {FORMAT_VERSION}")))
        }
        None => return Err(Error::Checkpoint("header has no format_version".into())),
    }
    serde_json::from_value(version).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))
}

/// Reads only the header; tensor data is not touched.
pub fn read_header(path: impl AsRef<Path>) -> Result<CheckpointHeader> {
    let mut f = fs::File::open(path)?;
    read_header_from(&mut f)
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Checkpoint> {
    let header = read_header_from(&mut r)?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let want = 8 * header.num_values();
    if payload.len() < want {
        return Err(truncated("tensor data"));
    }
    if payload.len() > want {
        return Err(Error::Checkpoint(format!("{} trailing bytes after tensor data", payload.len() - want)));
    }
    let mut values = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let n = e.shape.iter().product();
        let t = Tensor::new(e.shape.clone(), values.by_ref().take(n).collect())
            .map_err(|err| Error::Checkpoint(format!("tensor {}: {err}", e.name)))?;
        tensors.push(t);
    }
    let model = Model::from_tensors(header.config.model_spec(header.dims), tensors)?;
    let names = model.tensor_names();
    if let Some((want, got)) = names.iter().zip(&header.tensors).find(|(w, e)| **w != e.name) {
        return Err(Error::Checkpoint(format!("tensor {:?} where {want:?} was expected", got.name)));
    }
    Ok(Checkpoint { config: header.config, model, rng: header.rng, epoch: header.epoch })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ck)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(fs::File::open(path)?)
}
