//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "ATNCKPT\0" | u32 version | str tag | str config | str reference
//! u32 tensor count | per tensor: str name, u32 rank, u64 dims..., f32 values...
//! 32-byte SHA-256 of everything before it
//! ```
//!
//! where `str` is a u32 byte length followed by UTF-8 bytes.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{AtnError, Result};
use crate::kernels::{ParamStore, Tensor};

const MAGIC: &[u8; 8] = b"ATNCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Component tag: `dsc`, `asc`, `atn-ag` or `atn-af`.
    pub tag: String,
    /// Resolved run configuration text.
    pub config: String,
    /// Hash of a checkpoint this one depends on (the teacher, for `atn-af`).
    pub reference: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_store(tag: &str, config: &str, store: &ParamStore) -> Self {
        let tensors = store
            .ids()
            .map(|id| {
                let t = store.value(id);
                NamedTensor {
                    name: store.name(id).to_string(),
                    shape: t.shape().to_vec(),
                    values: t.data().iter().map(|v| *v as f32).collect(),
                }
            })
            .collect();
        Checkpoint {
            tag: tag.to_string(),
            config: config.to_string(),
            reference: String::new(),
            tensors,
        }
    }

    /// Copies every tensor into the parameter of the same name. Names and
    /// shapes must match the store exactly.
    pub fn apply_to(&self, store: &mut ParamStore) -> Result<()> {
        if self.tensors.len() != store.len() {
            return Err(AtnError::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for t in &self.tensors {
            let id = store
                .find(&t.name)
                .ok_or_else(|| AtnError::Checkpoint(format!("model has no parameter {:?}", t.name)))?;
            if store.value(id).shape() != t.shape.as_slice() {
                return Err(AtnError::Checkpoint(format!("shape mismatch for {:?}", t.name)));
            }
            let value = Tensor::from_vec(&t.shape, t.values.iter().map(|v| f64::from(*v)).collect())?;
            store.set_value(id, value)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.tag);
        put_str(&mut out, &self.config);
        put_str(&mut out, &self.reference);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(AtnError::Checkpoint("file too short".into()));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(AtnError::Checkpoint("content hash mismatch".into()));
        }
        let mut r = Reader { bytes: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(AtnError::Checkpoint("not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(AtnError::Checkpoint(format!("unsupported format version {version}")));
        }
        let tag = r.string()?;
        let config = r.string()?;
        let reference = r.string()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .ok_or_else(|| AtnError::Checkpoint("tensor size overflows".into()))?;
            let raw = r.take(len.checked_mul(4).ok_or_else(|| AtnError::Checkpoint("tensor size overflows".into()))?)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, values });
        }
        if r.pos != body.len() {
            return Err(AtnError::Checkpoint("trailing bytes after tensors".into()));
        }
        Ok(Checkpoint {
            tag,
            config,
            reference,
            tensors,
        })
    }

    /// Hex SHA-256 of the serialized checkpoint, used as a reference by
    /// dependent checkpoints.
    pub fn content_hash(&self) -> String {
        let bytes = self.to_bytes();
        bytes[bytes.len() - 32..].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Fails unless the tag is `expected`.
    pub fn expect_tag(&self, expected: &str) -> Result<()> {
        if self.tag != expected {
            return Err(AtnError::Checkpoint(format!(
                "expected a {expected:?} checkpoint, found {:?}",
                self.tag
            )));
        }
        Ok(())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| AtnError::Checkpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| AtnError::Checkpoint("invalid UTF-8 string".into()))
    }
}
