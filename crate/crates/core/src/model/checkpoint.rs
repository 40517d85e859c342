use std::fs;
use std::path::Path;

use thiserror::Error;

use super::aasist::Aasist3Model;
use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is truncated or malformed: {0}")]
    Format(String),
    #[error("checkpoint config does not match: {0}")]
    ConfigMismatch(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
}

const MAGIC: &[u8; 8] = b"AASIST3\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializes the model: magic, version, the embedded config document and
/// every named tensor (parameters and buffers) as little-endian `f32`.
pub fn encode_checkpoint(model: &Aasist3Model) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let config = model.config().to_toml()?;
    put_bytes(&mut out, config.as_bytes());
    let entries = model.params().entries();
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for entry in entries {
        put_bytes(&mut out, entry.name.as_bytes());
        let shape = entry.value.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in entry.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(CheckpointError::Format(format!("truncated while reading {what}")));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> std::result::Result<String, CheckpointError> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CheckpointError::Format(format!("{what} is not UTF-8")))
    }
}

/// Rebuilds a model from checkpoint bytes, validating every tensor name and
/// shape against the architecture the embedded config describes.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Aasist3Model> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if bytes.len() < MAGIC.len() || r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(CheckpointError::BadMagic.into());
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        }
        .into());
    }
    let text = r.string("config document")?;
    let config = ModelConfig::from_toml(&text)
        .map_err(|e| CheckpointError::ConfigMismatch(format!("embedded config is invalid: {e}")))?;
    let mut model = Aasist3Model::new(&config)?;
    let count = r.u32("tensor count")? as usize;
    if count != model.params().len() {
        return Err(CheckpointError::Format(format!(
            "checkpoint holds {count} tensors, the configured model has {}",
            model.params().len()
        ))
        .into());
    }
    let mut seen = vec![false; count];
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let ndim = r.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(r.u64("tensor shape")? as usize);
        }
        let id = model
            .params()
            .find(&name)
            .ok_or_else(|| CheckpointError::Format(format!("unknown tensor `{name}`")))?;
        let expected = model.params().get(id).shape().to_vec();
        if shape != expected {
            return Err(CheckpointError::ShapeMismatch {
                name,
                found: shape,
                expected,
            }
            .into());
        }
        if std::mem::replace(&mut seen[id.index()], true) {
            return Err(CheckpointError::Format(format!("tensor `{name}` appears twice")).into());
        }
        let n: usize = expected.iter().product();
        let raw = r.take(n * 4, "tensor values")?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        model.params_mut().set(id, Tensor::new(&expected, values)?)?;
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Format("trailing bytes after last tensor".into()).into());
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Aasist3Model, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Aasist3Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and rejects it unless its config equals `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<Aasist3Model> {
    let model = load_checkpoint(path)?;
    if model.config() != expected {
        return Err(CheckpointError::ConfigMismatch(format!(
            "{} was trained with a different model config",
            path.display()
        ))
        .into());
    }
    Ok(model)
}
