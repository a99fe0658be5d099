//! Binary container for named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "GZFCKPT\0"
//! version  u32      currently 1
//! name     u32 length + UTF-8 bytes      (model or payload name)
//! count    u32      number of tensors
//! count × { u32 length + UTF-8 tensor name, u32 rank, rank × u64 dims }
//! count × raw f64 arrays, in declaration order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GZFCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub name: String,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_str(w, &self.name)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_str(w, name)?;
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
        }
        for (_, t) in &self.tensors {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(TensorError::Checkpoint("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
        }
        let name = read_str(r)?;
        let count = read_u32(r)? as usize;
        let mut headers = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let tname = read_str(r)?;
            let rank = read_u32(r)? as usize;
            if rank == 0 || rank > 8 {
                return Err(TensorError::Checkpoint(format!("tensor {tname}: bad rank {rank}")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                dims.push(u64::from_le_bytes(b) as usize);
            }
            headers.push((tname, dims));
        }
        let mut tensors = Vec::with_capacity(headers.len());
        for (tname, dims) in headers {
            let len = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&l| l > 0 && l < (1 << 32))
                .ok_or_else(|| TensorError::Checkpoint(format!("tensor {tname}: bad dims {dims:?}")))?;
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((tname, Tensor::new(&dims, data)?));
        }
        Ok(Self { name, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 16 {
        return Err(TensorError::Checkpoint(format!("string length {len} too large")));
    }
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|e| TensorError::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout_is_stable() {
        let mut ck = Checkpoint::new("m");
        ck.push("w", Tensor::new(&[1, 2], vec![1.0, -2.5]).unwrap());
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"GZFCKPT\0");
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.push(b'm');
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.push(b'w');
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&(-2.5f64).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn rejects_corrupt_input() {
        assert!(Checkpoint::read_from(&mut &b"NOTACKPT"[..]).is_err());
        let mut buf = Vec::new();
        Checkpoint::new("x").write_to(&mut buf).unwrap();
        buf[8] = 9;
        assert!(Checkpoint::read_from(&mut buf.as_slice()).is_err());
    }
}
