//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "EDACCKPT"            8 bytes
//! version               u32 (= 1)
//! network count         u32
//! per network:
//!   name length         u32
//!   name                UTF-8 bytes
//!   tensor count        u32
//!   per tensor:
//!     rank              u32
//!     dims              rank × u32
//!     data              product(dims) × f64
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::autodiff::Tensor;

pub const MAGIC: &[u8; 8] = b"EDACCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint has no network named {0:?}")]
    MissingNetwork(String),
}

/// Named groups of tensors, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    networks: Vec<(String, Vec<Tensor>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensors: Vec<Tensor>) {
        self.networks.push((name.into(), tensors));
    }

    pub fn networks(&self) -> &[(String, Vec<Tensor>)] {
        &self.networks
    }

    pub fn get(&self, name: &str) -> Result<&[Tensor], CheckpointError> {
        self.networks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.as_slice())
            .ok_or_else(|| CheckpointError::MissingNetwork(name.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.networks.len() as u32).to_le_bytes());
        for (name, tensors) in &self.networks {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
            for t in tensors {
                out.extend_from_slice(&2u32.to_le_bytes());
                for d in t.shape() {
                    out.extend_from_slice(&(d as u32).to_le_bytes());
                }
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), CheckpointError> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = cur.u32()?;
        let mut networks = Vec::new();
        for _ in 0..count {
            let len = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(len)?.to_vec())
                .map_err(|_| CheckpointError::Malformed("network name is not UTF-8".into()))?;
            let n = cur.u32()?;
            let mut tensors = Vec::new();
            for _ in 0..n {
                let rank = cur.u32()?;
                let dims: Vec<usize> = (0..rank)
                    .map(|_| cur.u32().map(|d| d as usize))
                    .collect::<Result<_, _>>()?;
                let shape = match dims.as_slice() {
                    [] => [1, 1],
                    [n] => [1, *n],
                    [r, c] => [*r, *c],
                    _ => {
                        return Err(CheckpointError::Malformed(format!(
                            "tensor rank {rank} unsupported"
                        )))
                    }
                };
                let len = shape[0] * shape[1];
                let data = (0..len).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
                let t = Tensor::new(shape, data)
                    .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
                tensors.push(t);
            }
            networks.push((name, tensors));
        }
        if cur.pos != bytes.len() {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }
        Ok(Checkpoint { networks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new();
        c.push(
            "policy",
            vec![
                Tensor::new([2, 2], vec![1.0, -2.0, 3.5, 0.0]).unwrap(),
                Tensor::row(vec![0.25, 1e-300]),
            ],
        );
        c.push("temperature", vec![Tensor::scalar(-1.5)]);
        c
    }

    #[test]
    fn byte_layout_is_as_documented() {
        let b = sample().to_bytes();
        assert_eq!(&b[..8], b"EDACCKPT");
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 6);
        assert_eq!(&b[20..26], b"policy");
        assert_eq!(u32::from_le_bytes(b[26..30].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(b[30..34].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(b[42..50].try_into().unwrap()), 1.0);
    }

    #[test]
    fn round_trip_and_errors() {
        let c = sample();
        let b = c.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&b).unwrap(), c);

        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::BadMagic)
        ));

        let mut bad = b.clone();
        bad[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::UnsupportedVersion(9))
        ));

        assert!(matches!(
            Checkpoint::from_bytes(&b[..b.len() - 3]),
            Err(CheckpointError::Truncated)
        ));
        assert!(matches!(
            c.get("nope"),
            Err(CheckpointError::MissingNetwork(_))
        ));
    }
}
