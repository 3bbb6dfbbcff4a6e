//! Binary tensor checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "LMUC"                      4 bytes magic
//! version                     u32
//! precision tag               u8 (32 or 64, scalar width in bits)
//! repeated tensor records:
//!   name length               u32
//!   name                      UTF-8 bytes
//!   rank                      u32
//!   extents                   rank × u64
//!   payload                   product(extents) scalars, little-endian
//! CRC32 of every preceding byte   u32
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::numerics::{scalar_width, Precision, Real, Tensor};

pub const MAGIC: [u8; 4] = *b"LMUC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad checkpoint magic {found:?} (expected \"LMUC\")", found = String::from_utf8_lossy(found))]
    BadMagic { found: Vec<u8> },
    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("checkpoint CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Structure(String),
    #[error("checkpoint holds {found} data but {expected} was requested")]
    Precision { found: Precision, expected: Precision },
}

/// Named tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub tensors: Vec<(String, Tensor<T>)>,
}

impl<T: Real> Default for Checkpoint<T> {
    fn default() -> Self {
        Self {
            tensors: Vec::new(),
        }
    }
}

impl<T: Real> Checkpoint<T> {
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn take(&mut self, name: &str) -> Result<Tensor<T>, CheckpointError> {
        let idx = self
            .tensors
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| CheckpointError::Structure(format!("missing tensor `{name}`")))?;
        Ok(self.tensors.remove(idx).1)
    }

    pub fn scalar(&self, name: &str) -> Result<f64, CheckpointError> {
        self.get(name)
            .and_then(|t| t.data().first().map(|v| v.as_f64()))
            .ok_or_else(|| CheckpointError::Structure(format!("missing scalar `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(T::PRECISION.bits());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let header = peek_header(bytes)?;
        if header != T::PRECISION {
            return Err(CheckpointError::Precision {
                found: header,
                expected: T::PRECISION,
            });
        }
        let body = &bytes[..bytes.len() - 4];
        let width = scalar_width(T::PRECISION);
        let mut cur = Cursor { buf: body, pos: 9 };
        let mut tensors = Vec::new();
        while cur.pos < body.len() {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| CheckpointError::Structure("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = cur.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(cur.u64()? as usize);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .ok_or_else(|| CheckpointError::Structure("extent overflow".into()))?;
            let payload = cur.take(
                count
                    .checked_mul(width)
                    .ok_or_else(|| CheckpointError::Structure("payload overflow".into()))?,
            )?;
            let data = payload.chunks_exact(width).map(T::read_le).collect();
            let tensor = Tensor::new(&shape, data)
                .map_err(|e| CheckpointError::Structure(e.to_string()))?;
            tensors.push((name, tensor));
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> crate::Result<Self> {
        let bytes = fs::read(path)?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

/// Validates magic, version and CRC and returns the stored precision.
pub fn peek_header(bytes: &[u8]) -> Result<Precision, CheckpointError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < 8 {
        return Err(CheckpointError::Structure("truncated header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() < 13 {
        return Err(CheckpointError::Structure("truncated header".into()));
    }
    let split = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[split..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..split]);
    if stored != computed {
        return Err(CheckpointError::Crc { stored, computed });
    }
    Precision::from_bits(bytes[8])
        .ok_or_else(|| CheckpointError::Structure(format!("unknown precision tag {}", bytes[8])))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| CheckpointError::Structure("record runs past end of file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint<f64> {
        let mut c = Checkpoint::default();
        c.push("w", Tensor::new(&[2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 3.5]).unwrap());
        c.push("s", Tensor::scalar(42.0));
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::<f64>::from_bytes(&c.to_bytes()).unwrap();
        for ((na, a), (nb, b)) in c.tensors.iter().zip(&back.tensors) {
            assert_eq!(na, nb);
            assert_eq!(a.shape(), b.shape());
            let bits = |t: &Tensor<f64>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn truncated_file_is_an_error() {
        let bytes = sample().to_bytes();
        for cut in [bytes.len() - 1, bytes.len() / 2, 10, 5] {
            let err = Checkpoint::<f64>::from_bytes(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, CheckpointError::Crc { .. } | CheckpointError::Structure(_)));
        }
    }

    #[test]
    fn wrong_magic_names_found_bytes() {
        let mut bytes = sample().to_bytes();
        bytes[..4].copy_from_slice(b"ABCD");
        let err = Checkpoint::<f64>::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic { .. }));
        assert!(err.to_string().contains("ABCD"));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = sample().to_bytes();
        bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::<f64>::from_bytes(&bytes),
            Err(CheckpointError::Version { found: 7, .. })
        ));
    }

    #[test]
    fn corrupted_payload_fails_crc() {
        let mut bytes = sample().to_bytes();
        let mid = bytes.len() - 10;
        bytes[mid] ^= 0xff;
        assert!(matches!(
            Checkpoint::<f64>::from_bytes(&bytes),
            Err(CheckpointError::Crc { .. })
        ));
    }

    #[test]
    fn precision_is_enforced() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            Checkpoint::<f32>::from_bytes(&bytes),
            Err(CheckpointError::Precision { .. })
        ));
    }

    proptest! {
        #[test]
        fn f32_round_trip(values in proptest::collection::vec(any::<f32>(), 0..40)) {
            let mut c = Checkpoint::<f32>::default();
            c.push("x", Tensor::new(&[values.len()], values.clone()).unwrap());
            let back = Checkpoint::<f32>::from_bytes(&c.to_bytes()).unwrap();
            let got: Vec<u32> = back.tensors[0].1.data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u32> = values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
        }
    }
}
