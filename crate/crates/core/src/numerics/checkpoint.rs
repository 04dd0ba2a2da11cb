//! Binary tensor container.
//!
//! Layout: magic `F2GD`, one version byte, then records until EOF. Each
//! record is `name_len: u64`, UTF-8 name, `rank: u64`, `rank` dims as `u64`,
//! then the values as `f64`. All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"F2GD";
pub const VERSION: u8 = 1;

/// Ordered list of named tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorFile {
    pub records: Vec<(String, Tensor)>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.records.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn take(&mut self, name: &str) -> Option<Tensor> {
        let pos = self.records.iter().position(|(n, _)| n == name)?;
        Some(self.records.remove(pos).1)
    }

    /// Serializes to bytes and returns the byte offset of every record.
    pub fn to_bytes(&self) -> (Vec<u8>, Vec<u64>) {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        let mut offsets = Vec::with_capacity(self.records.len());
        for (name, t) in &self.records {
            offsets.push(out.len() as u64);
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u64).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        (out, offsets)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = cur.take(1)?[0];
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut records = Vec::new();
        while cur.pos < bytes.len() {
            let name_len = cur.u64()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|e| Error::Checkpoint(format!("record name is not UTF-8: {e}")))?
                .to_string();
            let rank = cur.u64()? as usize;
            if rank > 16 {
                return Err(Error::Checkpoint(format!("record {name}: rank {rank} too large")));
            }
            let shape = (0..rank).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n <= (bytes.len() - cur.pos) / 8)
                .ok_or_else(|| Error::Checkpoint(format!("record {name}: truncated values")))?;
            let data = (0..numel).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            records.push((name, Tensor::new(shape, data)?));
        }
        Ok(Self { records })
    }

    /// Writes the file and returns per-record byte offsets.
    pub fn write(&self, path: &Path) -> Result<Vec<u64>> {
        let (bytes, offsets) = self.to_bytes();
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&bytes)?;
        w.flush()?;
        Ok(offsets)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
