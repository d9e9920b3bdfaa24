//! Binary checkpoint of an encoder (and optional linear head).
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic   8 bytes  "ERASECKP"
//! version u32      1
//! flags   u32      bit 0: linear head present
//! d0 d1 d k step   u64 each (k = 0 without a head)
//! W1 W2 mW1 vW1 mW2 vW2                    f64, row-major
//! [Wh bh mWh vWh mbh vbh]                  f64, row-major, head only
//! ```

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::encoder::EncoderState;
use crate::error::{Error, Result};
use crate::optim::Moments;
use crate::trainer::LinearHead;

pub const MAGIC: &[u8; 8] = b"ERASECKP";
pub const VERSION: u32 = 1;
const FLAG_HEAD: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderState,
    pub head: Option<LinearHead>,
}

fn put_matrix(buf: &mut Vec<u8>, m: &DMatrix<f64>) {
    for row in m.row_iter() {
        for v in row.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn dim(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&d| d <= 1 << 24)
            .ok_or_else(|| Error::Checkpoint(format!("implausible dimension {v}")))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let raw = self.take(rows * cols * 8)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }

    fn moments(&mut self, rows: usize, cols: usize) -> Result<Moments> {
        Ok(Moments {
            m: self.matrix(rows, cols)?,
            v: self.matrix(rows, cols)?,
        })
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let e = &self.encoder;
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        let flags = if self.head.is_some() { FLAG_HEAD } else { 0 };
        buf.extend_from_slice(&flags.to_le_bytes());
        let k = self.head.as_ref().map_or(0, |h| h.w.ncols());
        for v in [e.input_dim(), e.hidden_dim(), e.output_dim(), k] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        buf.extend_from_slice(&e.step.to_le_bytes());
        for m in [&e.w1, &e.w2, &e.m_w1.m, &e.m_w1.v, &e.m_w2.m, &e.m_w2.v] {
            put_matrix(&mut buf, m);
        }
        if let Some(h) = &self.head {
            for m in [&h.w, &h.b, &h.m_w.m, &h.m_w.v, &h.m_b.m, &h.m_b.v] {
                put_matrix(&mut buf, m);
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let flags = r.u32()?;
        let (d0, d1, d, k) = (r.dim()?, r.dim()?, r.dim()?, r.dim()?);
        let step = r.u64()?;
        let w1 = r.matrix(d0, d1)?;
        let w2 = r.matrix(d1, d)?;
        let m_w1 = r.moments(d0, d1)?;
        let m_w2 = r.moments(d1, d)?;
        let encoder = EncoderState { w1, w2, m_w1, m_w2, step };
        let head = if flags & FLAG_HEAD != 0 {
            Some(LinearHead {
                w: r.matrix(d, k)?,
                b: r.matrix(1, k)?,
                m_w: r.moments(d, k)?,
                m_b: r.moments(1, k)?,
            })
        } else {
            None
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { encoder, head })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
