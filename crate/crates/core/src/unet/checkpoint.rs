//! Binary checkpoint:
//!
//! ```text
//! "LKMU1"
//! u32 digest length, digest bytes (hex SHA-256 of the model config)
//! u32 count, then per parameter (name order):
//!     u32 name length, name bytes, u32 rank, u64 extent × rank, f64 × numel
//! u32 count, then optimizer records in the same encoding
//! ```
//!
//! All integers and doubles are little-endian.

use std::io::Write;
use std::path::Path;

use lkm_tensor::Tensor;

use super::{build_model, Model, ModelConfig};
use crate::params::ParamStore;
use crate::{Error, Result};

pub const MAGIC: &[u8; 5] = b"LKMU1";

fn corrupt(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Checkpoint { field: field.into(), reason: reason.into() }
}

fn put_records(buf: &mut Vec<u8>, store: &ParamStore) {
    buf.extend((store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        buf.extend((name.len() as u32).to_le_bytes());
        buf.extend(name.as_bytes());
        buf.extend((t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend((d as u64).to_le_bytes());
        }
        for v in t.data() {
            buf.extend(v.to_le_bytes());
        }
    }
}

pub fn encode(model: &Model, optimizer: &ParamStore) -> Vec<u8> {
    let mut buf = MAGIC.to_vec();
    let digest = model.cfg.digest();
    buf.extend((digest.len() as u32).to_le_bytes());
    buf.extend(digest.as_bytes());
    put_records(&mut buf, &model.params);
    put_records(&mut buf, optimizer);
    buf
}

/// Write atomically: a temporary sibling is renamed over `path`.
pub fn save_checkpoint(path: &Path, model: &Model, optimizer: &ParamStore) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&encode(model, optimizer))?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt(field, format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn records(&mut self, section: &str) -> Result<ParamStore> {
        let count = self.u32(&format!("{section} count"))?;
        let mut store = ParamStore::new();
        let mut last: Option<String> = None;
        for i in 0..count {
            let len = self.u32(&format!("{section}[{i}] name length"))?;
            let name = std::str::from_utf8(self.take(len, &format!("{section}[{i}] name"))?)
                .map_err(|_| corrupt(format!("{section}[{i}] name"), "not UTF-8"))?
                .to_string();
            if last.as_deref().is_some_and(|l| l >= name.as_str()) {
                return Err(corrupt(format!("{section}.{name}"), "records out of name order"));
            }
            let field = format!("{section}.{name}");
            let rank = self.u32(&field)?;
            if rank > 8 {
                return Err(corrupt(field, format!("rank {rank} too large")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u64(&field)? as usize);
            }
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let n = n.filter(|&n| n > 0).ok_or_else(|| corrupt(&field, format!("bad extents {shape:?}")))?;
            let bytes = self.take(n.checked_mul(8).ok_or_else(|| corrupt(&field, "size overflow"))?, &field)?;
            let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            store.insert(name.clone(), Tensor::from_vec(data, &shape)?);
            last = Some(name);
        }
        Ok(store)
    }
}

/// Decode a checkpoint for the architecture `cfg`. Any mismatch or damage
/// is reported before a model is assembled.
pub fn decode(bytes: &[u8], cfg: &ModelConfig) -> Result<(Model, ParamStore)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(corrupt("magic", "not an LKMU1 checkpoint"));
    }
    let len = r.u32("config digest length")?;
    let digest = std::str::from_utf8(r.take(len, "config digest")?)
        .map_err(|_| corrupt("config digest", "not UTF-8"))?;
    if digest != cfg.digest() {
        return Err(corrupt("config digest", format!("file has {digest}, expected {}", cfg.digest())));
    }
    let params = r.records("params")?;
    let optimizer = r.records("optimizer")?;
    if r.pos != bytes.len() {
        return Err(corrupt("trailer", format!("{} unexpected bytes", bytes.len() - r.pos)));
    }
    let template = build_model(cfg, 0)?;
    for (name, t) in template.params.iter() {
        let got = params.get(name).map_err(|_| corrupt(format!("params.{name}"), "missing"))?;
        if got.shape() != t.shape() {
            return Err(corrupt(format!("params.{name}"), format!("shape {:?}, expected {:?}", got.shape(), t.shape())));
        }
    }
    if let Some(extra) = params.names().find(|n| !template.params.contains(n)) {
        return Err(corrupt(format!("params.{extra}"), "not part of this architecture"));
    }
    Ok((Model { cfg: cfg.clone(), params }, optimizer))
}

pub fn load_checkpoint(path: &Path, cfg: &ModelConfig) -> Result<(Model, ParamStore)> {
    decode(&std::fs::read(path)?, cfg)
}
