//! Versioned binary model checkpoint: magic, version, config and history as
//! JSON, node keys, tensors as little-endian f64, trailing crc32.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{EpochMetrics, Params, RgcnConfig, RgcnError, RgcnModel, RELATIONS};
use crate::hetgraph::NodeKind;

const MAGIC: &[u8; 8] = b"PMRGCN\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, x: u32) {
    buf.extend_from_slice(&x.to_le_bytes());
}

fn put_bytes(buf: &mut Vec<u8>, b: &[u8]) {
    put_u32(buf, b.len() as u32);
    buf.extend_from_slice(b);
}

pub fn write_checkpoint<W: Write>(mut w: W, model: &RgcnModel) -> Result<(), RgcnError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, CHECKPOINT_VERSION);
    let cfg = serde_json::to_vec(&model.config).map_err(|e| RgcnError::Checkpoint(e.to_string()))?;
    put_bytes(&mut buf, &cfg);
    let hist = serde_json::to_vec(&model.history).map_err(|e| RgcnError::Checkpoint(e.to_string()))?;
    put_bytes(&mut buf, &hist);
    put_u32(&mut buf, model.keys.len() as u32);
    for (kind, key) in &model.keys {
        buf.push(kind.code());
        put_bytes(&mut buf, key.as_bytes());
    }
    let tensors = model.params.tensors();
    put_u32(&mut buf, tensors.len() as u32);
    for t in tensors {
        put_u32(&mut buf, t.nrows() as u32);
        put_u32(&mut buf, t.ncols() as u32);
        for x in t.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    put_u32(&mut buf, crc);
    w.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RgcnError> {
        if self.buf.len() - self.pos < n {
            return Err(RgcnError::Checkpoint("truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, RgcnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8], RgcnError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<RgcnModel, RgcnError> {
    let mut all = Vec::new();
    r.read_to_end(&mut all)?;
    if all.len() < MAGIC.len() + 8 || &all[..8] != MAGIC {
        return Err(RgcnError::Checkpoint("not a model checkpoint".into()));
    }
    let (body, tail) = all.split_at(all.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(RgcnError::Checkpoint("checksum mismatch".into()));
    }
    let mut c = Cursor { buf: body, pos: 8 };
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(RgcnError::Checkpoint(format!("unsupported version {version}")));
    }
    let bad = |e: serde_json::Error| RgcnError::Checkpoint(e.to_string());
    let config: RgcnConfig = serde_json::from_slice(c.bytes()?).map_err(bad)?;
    let history: Vec<EpochMetrics> = serde_json::from_slice(c.bytes()?).map_err(bad)?;
    let n = c.u32()? as usize;
    let mut keys = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = NodeKind::from_code(c.take(1)?[0]).ok_or_else(|| RgcnError::Checkpoint("bad node kind".into()))?;
        let key = std::str::from_utf8(c.bytes()?)
            .map_err(|_| RgcnError::Checkpoint("bad key".into()))?
            .to_string();
        keys.push((kind, key));
    }
    let count = c.u32()? as usize;
    if count != 1 + config.layers * (1 + RELATIONS) {
        return Err(RgcnError::Checkpoint("tensor count does not match config".into()));
    }
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = c.u32()? as usize;
        let cols = c.u32()? as usize;
        let raw = c.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.push(Array2::from_shape_vec((rows, cols), data).unwrap());
    }
    if c.pos != body.len() {
        return Err(RgcnError::Checkpoint("trailing bytes".into()));
    }
    let mut it = tensors.into_iter();
    let embedding = it.next().unwrap();
    if embedding.nrows() != keys.len() {
        return Err(RgcnError::Checkpoint("embedding rows do not match node keys".into()));
    }
    let mut self_w = Vec::new();
    let mut rel_w = Vec::new();
    for _ in 0..config.layers {
        self_w.push(it.next().unwrap());
        rel_w.push([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]);
    }
    Ok(RgcnModel {
        config,
        params: Params {
            embedding,
            self_w,
            rel_w,
        },
        keys,
        history,
    })
}

/// Writes through a temporary file and renames it into place.
pub fn save_checkpoint(path: &Path, model: &RgcnModel) -> Result<(), RgcnError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        write_checkpoint(&mut f, model)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<RgcnModel, RgcnError> {
    read_checkpoint(fs::File::open(path)?)
}
