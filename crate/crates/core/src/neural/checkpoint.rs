//! Self-describing binary checkpoint for [`MlpParams`].
//!
//! Layout, all little-endian:
//! `b"LMCK"`, u32 version, u32 layer count, u32 × layer count widths,
//! u64 parameter count, f64 × parameter count, u32 CRC-32 of everything
//! before it.

use std::path::Path;

use super::mlp::{param_count, MlpParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LMCK";
const VERSION: u32 = 1;

pub fn encode(p: &MlpParams) -> Vec<u8> {
    let sizes = p.layer_sizes();
    let mut out = Vec::with_capacity(24 + 4 * sizes.len() + 8 * p.params().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&(p.params().len() as u64).to_le_bytes());
    for x in p.params() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(buf: &[u8]) -> Result<MlpParams> {
    if buf.len() < 4 + 4 {
        return Err(Error::Checkpoint("truncated file".into()));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let nl = r.u32()? as usize;
    if !(2..=64).contains(&nl) {
        return Err(Error::Checkpoint(format!("implausible layer count {nl}")));
    }
    let sizes = (0..nl).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
    let n = r.u64()? as usize;
    if n != param_count(&sizes) {
        return Err(Error::Checkpoint(format!("parameter count {n} does not match layer sizes {sizes:?}")));
    }
    let payload = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("overflow".into()))?)?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint("length mismatch".into()));
    }
    let crc = u32::from_le_bytes(tail.try_into().unwrap());
    if crc != crc32fast::hash(body) {
        return Err(Error::Checkpoint("checksum mismatch".into()));
    }
    let params = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    MlpParams::from_parts(sizes, params).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(p: &MlpParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(p)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<MlpParams> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}
