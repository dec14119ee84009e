//! Binary checkpoint: named f64 arrays plus the config hash they were trained under.
//!
//! Layout (all integers little-endian):
//! `b"RBCK"`, `u32 version`, `u64 config_hash`, `u32 entry_count`, then per entry
//! `u32 name_len`, name bytes (UTF-8), `u32 ndim`, `ndim x u64 dims`, `prod(dims) x f64`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RBCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub entries: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(config_hash: u64) -> Self {
        Self {
            config_hash,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.insert(name.into(), t);
    }

    pub fn insert_vec(&mut self, name: impl Into<String>, v: Vec<f64>) {
        let n = v.len();
        self.entries.insert(
            name.into(),
            Tensor {
                shape: vec![n],
                data: v,
            },
        );
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry `{name}`")))
    }

    /// Fetch an entry and check its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(Error::Checkpoint(format!(
                "entry `{name}` has shape {:?}, expected {shape:?}",
                t.shape
            )));
        }
        Ok(t)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.config_hash.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, t) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let config_hash = read_u64(&mut r)?;
        let count = read_u32(&mut r)?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("entry name not UTF-8".into()))?;
            let ndim = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(read_u64(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            entries.insert(name, Tensor { shape, data });
        }
        Ok(Self { config_hash, entries })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_shape_check() {
        let mut c = Checkpoint::new(0xdead_beef);
        c.insert(
            "a.w",
            Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-300, -7.25]).unwrap(),
        );
        c.insert_vec("step", vec![42.0]);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"RBCK");
        let back = Checkpoint::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, c);
        assert!(back.expect("a.w", &[3, 2]).is_err());
        assert!(back.expect("a.w", &[2, 3]).is_ok());
        assert!(back.get("nope").is_err());
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(Checkpoint::read_from(&b"XXXX\x01\0\0\0"[..]).is_err());
    }
}
