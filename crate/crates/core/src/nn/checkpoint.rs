//! Versioned binary checkpoint container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "LGLM" | u32 version | u32 #meta { str key, str value }
//! | u32 #tensors { str name, u8 ndim, u64 dims.., f64 data.. }
//! ```
//!
//! Tensor data is always written as 64-bit floats, so `f32` models
//! round-trip bit-exactly through the widening.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LGLM";
const VERSION: u32 = 1;

/// A named tensor with explicit dims, row-major data.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorEntry {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        TensorEntry { name: name.into(), dims, data }
    }
}

/// Everything a model needs to restore itself.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<TensorEntry>,
}

impl Snapshot {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta_value(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing meta key {key:?}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&TensorEntry> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("invalid utf-8 in string".into()))
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(snap.meta.len() as u32).to_le_bytes())?;
    for (k, v) in &snap.meta {
        write_str(&mut w, k)?;
        write_str(&mut w, v)?;
    }
    w.write_all(&(snap.tensors.len() as u32).to_le_bytes())?;
    for t in &snap.tensors {
        write_str(&mut w, &t.name)?;
        w.write_all(&[t.dims.len() as u8])?;
        for &d in &t.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    r.read_exact(&mut v4)?;
    let n_meta = u32::from_le_bytes(v4);
    let mut meta = Vec::with_capacity(n_meta as usize);
    for _ in 0..n_meta {
        let k = read_str(&mut r)?;
        let v = read_str(&mut r)?;
        meta.push((k, v));
    }
    r.read_exact(&mut v4)?;
    let n_tensors = u32::from_le_bytes(v4);
    let mut tensors = Vec::with_capacity(n_tensors as usize);
    for _ in 0..n_tensors {
        let name = read_str(&mut r)?;
        let mut nd = [0u8; 1];
        r.read_exact(&mut nd)?;
        let mut dims = Vec::with_capacity(nd[0] as usize);
        for _ in 0..nd[0] {
            let mut d8 = [0u8; 8];
            r.read_exact(&mut d8)?;
            dims.push(u64::from_le_bytes(d8) as usize);
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut d8 = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut d8)?;
            data.push(f64::from_le_bytes(d8));
        }
        tensors.push(TensorEntry { name, dims, data });
    }
    Ok(Snapshot { meta, tensors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let snap = Snapshot {
            meta: vec![
                ("variant".into(), "bem".into()),
                ("seed".into(), "7".into()),
            ],
            tensors: vec![
                TensorEntry::new("emb", vec![3, 2], vec![0.1, -0.2, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -0.0]),
                TensorEntry::new("b", vec![4], vec![1.0, 2.0, 3.0, 4.0]),
            ],
        };
        write_snapshot(&path, &snap).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back, snap);
        for (a, b) in back.tensors[0].data.iter().zip(&snap.tensors[0].data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(read_snapshot(&path).is_err());
    }
}
