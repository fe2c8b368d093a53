//! Checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic     8 bytes  "IQFPCKPT"
//! version   u32      1
//! meta_len  u32      length of the JSON block
//! meta      JSON     {"config": ModelConfig, "history": [EpochStats...]}
//! count     u32      number of tensors
//! per tensor:
//!   name_len u16, name (UTF-8)
//!   ndim     u8,  dims u32 x ndim
//!   payload  f32 x product(dims)
//! ```
//!
//! Tensors appear in canonical order and must match the layout implied by
//! the config exactly. Trailing bytes are rejected.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochStats, FingerprintModel, ModelConfig};
use crate::{write_atomic, Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"IQFPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    history: Vec<EpochStats>,
}

fn encode(model: &FingerprintModel) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&Meta { config: model.config().clone(), history: model.history().to_vec() })
        .map_err(|e| Error::Config(format!("cannot serialize checkpoint metadata: {e}")))?;
    let mut out = Vec::with_capacity(64 + meta.len() + 4 * model.n_params());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&(model.tensors().len() as u32).to_le_bytes());
    for t in model.tensors() {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &model.params()[t.range()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes the model atomically: a temporary file in the target directory is
/// renamed over `path` once complete.
pub fn save_checkpoint(model: &FingerprintModel, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode(model)?)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn fail(&self, reason: impl std::fmt::Display) -> Error {
        Error::Format { path: self.path.to_path_buf(), reason: format!("at byte {}: {reason}", self.pos) }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

fn decode(buf: &[u8], path: &Path) -> Result<FingerprintModel> {
    let mut c = Cursor { buf, pos: 0, path };
    if c.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format { path: path.to_path_buf(), reason: "not a checkpoint (bad magic)".into() });
    }
    let version = c.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion { path: path.to_path_buf(), found: version, supported: CHECKPOINT_VERSION });
    }
    let meta_len = c.u32("metadata length")? as usize;
    let meta: Meta =
        serde_json::from_slice(c.take(meta_len, "metadata")?).map_err(|e| c.fail(format!("bad metadata: {e}")))?;
    let template = FingerprintModel::new(meta.config.clone()).map_err(|e| c.fail(format!("bad config: {e}")))?;
    let count = c.u32("tensor count")? as usize;
    if count != template.tensors().len() {
        return Err(c.fail(format!("expected {} tensors, found {count}", template.tensors().len())));
    }
    let mut params = vec![0.0f32; template.n_params()];
    for t in template.tensors() {
        let name_len = u16::from_le_bytes(c.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(c.take(name_len, "tensor name")?).map_err(|_| c.fail("tensor name is not UTF-8"))?;
        if name != t.name {
            return Err(c.fail(format!("expected tensor {}, found {name}", t.name)));
        }
        let ndim = c.take(1, "rank")?[0] as usize;
        let dims = (0..ndim).map(|_| c.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims != t.shape {
            return Err(c.fail(format!("tensor {name}: expected shape {:?}, found {dims:?}", t.shape)));
        }
        let payload = c.take(4 * t.len(), "tensor payload")?;
        for (dst, chunk) in params[t.range()].iter_mut().zip(payload.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
    }
    if c.pos != buf.len() {
        return Err(c.fail(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    FingerprintModel::from_parts(meta.config, params, meta.history)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FingerprintModel> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    decode(&buf, path)
}
