//! `EVHD` checkpoints: magic, u32 version, the config as JSON, then named
//! float64 tensors. All integers and floats are little-endian.

use std::path::Path;

use super::model::{HeadConfig, HeadModel, NamedTensor};
use super::tape::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EVHD";
const VERSION: u32 = 1;

pub fn checkpoint_to_bytes(model: &HeadModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let cfg = serde_json::to_vec(model.config())?;
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    out.extend_from_slice(&(model.parameters().len() as u32).to_le_bytes());
    for p in model.parameters() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.extend_from_slice(&(p.tensor.shape.len() as u32).to_le_bytes());
        for &d in &p.tensor.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &p.tensor.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::parse(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<HeadModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::parse("not an EVHD checkpoint"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::parse(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u32()?;
    let config: HeadConfig = serde_json::from_slice(r.take(len)?)?;
    let count = r.u32()?;
    let mut params = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::parse("tensor name is not UTF-8"))?;
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::parse("tensor size overflows"))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::parse("tensor size overflows"))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        params.push(NamedTensor {
            name,
            tensor: Tensor::new(shape, data)?,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::parse("trailing bytes after checkpoint"));
    }
    HeadModel::from_parameters(config, params)
}

pub fn save_checkpoint(model: &HeadModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<HeadModel> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
