//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `HKG1`, `u32` record count, then per record
//! a `u8` kind, `u32` name length and UTF-8 name. Kind 0 is a tensor
//! (`u32` rank, `u64` dims, `f64` values); kind 1 is text (`u64` length,
//! UTF-8 bytes).

use std::path::Path;

use serde_json::json;

use super::Tensor;
use crate::error::{HkgError, Result};

pub const MAGIC: &[u8; 4] = b"HKG1";

const KIND_TENSOR: u8 = 0;
const KIND_TEXT: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Tensor(Tensor),
    Text(String),
}

/// Ordered named records. Order is preserved so that writing the same state
/// twice produces identical bytes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    records: Vec<(String, Record)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn put(&mut self, name: &str, record: Record) {
        match self.records.iter_mut().find(|(n, _)| n == name) {
            Some((_, r)) => *r = record,
            None => self.records.push((name.to_owned(), record)),
        }
    }

    pub fn put_tensor(&mut self, name: &str, tensor: Tensor) {
        self.put(name, Record::Tensor(tensor));
    }

    pub fn put_text(&mut self, name: &str, text: impl Into<String>) {
        self.put(name, Record::Text(text.into()));
    }

    fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        match self.get(name) {
            Some(Record::Tensor(t)) => Ok(t),
            Some(_) => Err(HkgError::Checkpoint(format!(
                "record `{name}` is not a tensor"
            ))),
            None => Err(HkgError::Checkpoint(format!("missing record `{name}`"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.get(name) {
            Some(Record::Text(t)) => Ok(t),
            Some(_) => Err(HkgError::Checkpoint(format!("record `{name}` is not text"))),
            None => Err(HkgError::Checkpoint(format!("missing record `{name}`"))),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|(n, _)| n.as_str())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for (name, record) in &self.records {
            let kind = match record {
                Record::Tensor(_) => KIND_TENSOR,
                Record::Text(_) => KIND_TEXT,
            };
            out.push(kind);
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match record {
                Record::Tensor(t) => {
                    out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
                    for &d in &t.shape {
                        out.extend_from_slice(&(d as u64).to_le_bytes());
                    }
                    for &v in &t.data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Record::Text(s) => {
                    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
                    out.extend_from_slice(s.as_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(HkgError::Checkpoint("bad magic, expected HKG1".into()));
        }
        let count = r.u32()?;
        let mut ckpt = Checkpoint::new();
        for _ in 0..count {
            let kind = r.take(1)?[0];
            let name_len = r.u32()? as usize;
            let name = r.utf8(name_len)?;
            let record = match kind {
                KIND_TENSOR => {
                    let rank = r.u32()? as usize;
                    let shape = (0..rank)
                        .map(|_| r.u64().map(|d| d as usize))
                        .collect::<Result<Vec<_>>>()?;
                    let n: usize = shape.iter().product();
                    if n.saturating_mul(8) > r.remaining() {
                        return Err(HkgError::Checkpoint(format!("tensor `{name}` truncated")));
                    }
                    let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                    Record::Tensor(Tensor { shape, data })
                }
                KIND_TEXT => {
                    let len = r.u64()? as usize;
                    Record::Text(r.utf8(len)?)
                }
                k => return Err(HkgError::Checkpoint(format!("unknown record kind {k}"))),
            };
            ckpt.records.push((name, record));
        }
        if r.remaining() != 0 {
            return Err(HkgError::Checkpoint(format!(
                "{} trailing bytes",
                r.remaining()
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| HkgError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| HkgError::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }

    /// Human-readable dump of every record.
    pub fn to_json(&self) -> serde_json::Value {
        let map = self
            .records
            .iter()
            .map(|(name, rec)| {
                let v = match rec {
                    Record::Tensor(t) => json!({ "shape": t.shape, "values": t.data }),
                    Record::Text(s) => json!(s),
                };
                (name.clone(), v)
            })
            .collect::<serde_json::Map<_, _>>();
        serde_json::Value::Object(map)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(HkgError::Checkpoint(format!(
                "unexpected end of file at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn utf8(&mut self, n: usize) -> Result<String> {
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|e| HkgError::Checkpoint(format!("invalid UTF-8 name: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new();
        c.put_tensor(
            "w0",
            Tensor::new(vec![2, 2], vec![1.0, -0.5, f64::MIN_POSITIVE, 3.25]).unwrap(),
        );
        c.put_text("head", "gcn");
        c.put_tensor("empty", Tensor::zeros(&[0]));
        c
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), c.to_bytes());
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..4], b"HKG1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(bytes[8], 0);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(b"HKG0\0\0\0\0").is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn typed_lookup() {
        let c = sample();
        assert_eq!(c.text("head").unwrap(), "gcn");
        assert!(c.tensor("head").is_err());
        assert!(c.tensor("missing").is_err());
    }

    #[test]
    fn put_replaces_in_place() {
        let mut c = sample();
        c.put_text("head", "linear");
        assert_eq!(c.len(), 3);
        assert_eq!(c.names().next(), Some("w0"));
        assert_eq!(c.text("head").unwrap(), "linear");
    }

    #[test]
    fn json_dump_lists_records() {
        let v = sample().to_json();
        assert_eq!(v["head"], "gcn");
        assert_eq!(v["w0"]["shape"], json!([2, 2]));
    }
}
