//! Binary checkpoint: magic, format version, JSON config echo, then named
//! parameter blobs (name, shape, f64 little-endian values).

use std::fs;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"XCBCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config)?;
    buf.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    buf.extend_from_slice(&cfg);
    let params = model.named_params();
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in &params {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data().iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Integrity(format!("{}: truncated checkpoint at byte {}", self.path.display(), self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn read_header<'a>(bytes: &'a [u8], path: &'a Path) -> Result<(ModelConfig, Reader<'a>)> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Integrity(format!("{}: not a checkpoint file", path.display())));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Integrity(format!("{}: unsupported checkpoint version {version}", path.display())));
    }
    let len = r.u64()? as usize;
    let cfg: ModelConfig = serde_json::from_slice(r.take(len)?)?;
    Ok((cfg, r))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Config echo stored in a checkpoint header.
pub fn read_checkpoint_config(path: &Path) -> Result<ModelConfig> {
    let bytes = read_bytes(path)?;
    Ok(read_header(&bytes, path)?.0)
}

/// Rebuilds the model from a checkpoint. With `expected`, a differing
/// stored config is rejected.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Model> {
    let bytes = read_bytes(path)?;
    let (cfg, mut r) = read_header(&bytes, path)?;
    if let Some(exp) = expected {
        if *exp != cfg {
            return Err(Error::ConfigMismatch(format!(
                "{}: checkpoint was written for {}, expected {}",
                path.display(),
                serde_json::to_string(&cfg)?,
                serde_json::to_string(exp)?
            )));
        }
    }
    let model = Model::new(cfg, 0)?;
    let params = model.named_params();
    let count = r.u32()? as usize;
    if count != params.len() {
        return Err(Error::Integrity(format!("{}: {count} parameter blobs, model has {}", path.display(), params.len())));
    }
    for (name, t) in &params {
        let n = r.u32()? as usize;
        let stored = String::from_utf8_lossy(r.take(n)?).into_owned();
        if stored != *name {
            return Err(Error::Integrity(format!("{}: found blob `{stored}` where `{name}` was expected", path.display())));
        }
        let ndim = r.u32()? as usize;
        let shape: Vec<usize> = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        if shape != t.shape() {
            return Err(Error::Integrity(format!("{}: `{name}` has shape {shape:?}, expected {:?}", path.display(), t.shape())));
        }
        let raw = r.take(t.numel() * 8)?;
        let values: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        t.set_data(&values)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Integrity(format!("{}: {} trailing bytes", path.display(), bytes.len() - r.pos)));
    }
    Ok(model)
}
