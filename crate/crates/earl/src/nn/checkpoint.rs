//! Versioned flat-array checkpoint files.
//!
//! Layout: the magic line, a little-endian `u64` entry count, then per
//! entry a name (length-prefixed UTF-8), a shape (length-prefixed `u64`
//! dims), and the row-major `f64` payload. Entry order is part of the
//! format; writing the same arrays in the same order is byte-stable.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::NnError;

pub const CHECKPOINT_MAGIC: &[u8] = b"EARL-CKPT-1\n";

/// Upper bound on a single array, guarding against corrupt headers.
const MAX_ELEMS: u64 = 1 << 30;

/// Accumulates named arrays and writes them in insertion order.
#[derive(Debug, Default)]
pub struct CheckpointBuilder {
    entries: Vec<(String, Vec<u64>, Vec<f64>)>,
}

impl CheckpointBuilder {
    pub fn new() -> CheckpointBuilder {
        CheckpointBuilder::default()
    }

    /// Adds one array. The shape product must match the data length.
    pub fn push(&mut self, name: &str, shape: &[u64], data: Vec<f64>) {
        let expect: u64 = shape.iter().product();
        assert_eq!(expect as usize, data.len(), "shape does not match data for {name}");
        self.entries.push((name.to_string(), shape.to_vec(), data));
    }

    /// Convenience for rank-1 data.
    pub fn push_flat(&mut self, name: &str, data: Vec<f64>) {
        let shape = [data.len() as u64];
        self.push(name, &shape, data);
    }

    pub fn write(&self, path: &Path) -> Result<(), NnError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for (name, shape, data) in &self.entries {
            w.write_all(&(name.len() as u64).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(shape.len() as u64).to_le_bytes())?;
            for d in shape {
                w.write_all(&d.to_le_bytes())?;
            }
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// A parsed checkpoint file.
#[derive(Debug)]
pub struct Checkpoint {
    entries: Vec<(String, Vec<u64>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Checkpoint, NnError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = vec![0u8; CHECKPOINT_MAGIC.len()];
        r.read_exact(&mut magic)
            .map_err(|_| NnError::Checkpoint("file too short for header".into()))?;
        if magic != CHECKPOINT_MAGIC {
            return Err(NnError::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let count = read_u64(&mut r)?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let name_len = read_u64(&mut r)?;
            if name_len > 4096 {
                return Err(NnError::Checkpoint(format!("unreasonable name length {name_len}")));
            }
            let mut name_bytes = vec![0u8; name_len as usize];
            r.read_exact(&mut name_bytes)
                .map_err(|_| NnError::Checkpoint("truncated entry name".into()))?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| NnError::Checkpoint("entry name is not UTF-8".into()))?;
            let ndim = read_u64(&mut r)?;
            if ndim > 8 {
                return Err(NnError::Checkpoint(format!("unreasonable rank {ndim} for {name}")));
            }
            let mut shape = Vec::with_capacity(ndim as usize);
            let mut elems: u64 = 1;
            for _ in 0..ndim {
                let d = read_u64(&mut r)?;
                elems = elems.saturating_mul(d);
                shape.push(d);
            }
            if elems > MAX_ELEMS {
                return Err(NnError::Checkpoint(format!("array {name} is implausibly large")));
            }
            let mut data = Vec::with_capacity(elems as usize);
            let mut buf = [0u8; 8];
            for _ in 0..elems {
                r.read_exact(&mut buf)
                    .map_err(|_| NnError::Checkpoint(format!("truncated data for {name}")))?;
                data.push(f64::from_le_bytes(buf));
            }
            entries.push((name, shape, data));
        }
        Ok(Checkpoint { entries })
    }

    pub fn entries(&self) -> &[(String, Vec<u64>, Vec<f64>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<(&[u64], &[f64])> {
        self.entries
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, s, d)| (s.as_slice(), d.as_slice()))
    }

    /// Like [`Checkpoint::get`] but an absent name is an error.
    pub fn require(&self, name: &str) -> Result<(&[u64], &[f64]), NnError> {
        self.get(name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing array {name}")))
    }
}

fn read_u64(r: &mut impl Read) -> Result<u64, NnError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| NnError::Checkpoint("truncated integer field".into()))?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let mut b = CheckpointBuilder::new();
        b.push("net/w", &[2, 3], vec![1.5, -0.25, 0.0, f64::MIN_POSITIVE, 1e300, -7.125]);
        b.push_flat("net/b", vec![0.1, 0.2]);
        b.write(&path).unwrap();

        let ckpt = Checkpoint::read(&path).unwrap();
        let (shape, data) = ckpt.get("net/w").unwrap();
        assert_eq!(shape, &[2, 3]);
        assert_eq!(data[3], f64::MIN_POSITIVE);
        assert_eq!(data[4], 1e300);
        assert_eq!(ckpt.entries().len(), 2);
        assert!(ckpt.get("net/missing").is_none());
        assert!(ckpt.require("net/b").is_ok());
    }

    #[test]
    fn identical_content_writes_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("x1"), dir.path().join("x2"));
        for p in [&p1, &p2] {
            let mut b = CheckpointBuilder::new();
            b.push_flat("v", vec![0.5, 0.7]);
            b.write(p).unwrap();
        }
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad");
        std::fs::write(&bad, b"HELLO WORLD!____").unwrap();
        assert!(matches!(Checkpoint::read(&bad), Err(NnError::Checkpoint(_))));

        let trunc = dir.path().join("trunc");
        let mut b = CheckpointBuilder::new();
        b.push_flat("v", vec![1.0, 2.0, 3.0]);
        b.write(&trunc).unwrap();
        let bytes = std::fs::read(&trunc).unwrap();
        std::fs::write(&trunc, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(Checkpoint::read(&trunc), Err(NnError::Checkpoint(_))));
    }
}
