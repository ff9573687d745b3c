//! Binary model file:
//!
//! ```text
//! "A2CM" | version u32 | d0 u32 | h1 u32 | d u32 |
//! w1, b1, w2, b2 as f64 (row-major) | meta_len u32 | meta (UTF-8 JSON) | crc32 u32
//! ```
//!
//! All integers and floats little-endian; the CRC covers every preceding byte.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::NetworkParams;

pub const MODEL_MAGIC: &[u8; 4] = b"A2CM";
pub const MODEL_VERSION: u32 = 1;

const HEADER_LEN: usize = 4 + 4 + 3 * 4;

/// Training provenance stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub mode: String,
    pub seed: u64,
    pub iterations: u64,
    pub embedding_dim: u64,
}

pub fn serialize_model(params: &NetworkParams, meta: &ModelMeta) -> Vec<u8> {
    let meta_bytes = serde_json::to_vec(meta).expect("metadata is plain data");
    let (d0, h1, d) = params.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.num_params() + meta_bytes.len() + 8);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    for dim in [d0, h1, d] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for x in params.iter() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&meta_bytes);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn deserialize_model(bytes: &[u8]) -> Result<(NetworkParams, ModelMeta)> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != MODEL_MAGIC {
        return Err(Error::Corrupt("bad magic".into()));
    }
    let version = cur.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Version(version));
    }
    let d0 = cur.u32()? as usize;
    let h1 = cur.u32()? as usize;
    let d = cur.u32()? as usize;
    if d0 == 0 || h1 == 0 || d == 0 {
        return Err(Error::Corrupt("zero dimension".into()));
    }
    let w1 = cur.f64s(h1 * d0)?;
    let b1 = cur.f64s(h1)?;
    let w2 = cur.f64s(d * h1)?;
    let b2 = cur.f64s(d)?;
    let meta_len = cur.u32()? as usize;
    let meta_bytes = cur.take(meta_len)?;
    let body_len = cur.pos;
    let stored_crc = cur.u32()?;
    if cur.pos != bytes.len() {
        return Err(Error::Corrupt("trailing bytes".into()));
    }
    if crc32fast::hash(&bytes[..body_len]) != stored_crc {
        return Err(Error::Corrupt("checksum mismatch".into()));
    }
    let meta: ModelMeta = serde_json::from_slice(meta_bytes).map_err(|e| Error::Corrupt(format!("metadata: {e}")))?;
    let params = NetworkParams::from_blocks((d0, h1, d), w1, b1, w2, b2).map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok((params, meta))
}
