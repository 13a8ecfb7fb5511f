//! Binary container shared by every persisted model.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RKT1" | u32 version | u64 vocab hash | u32 tensor count
//! per tensor: u16 name len | name | u8 rank | u64 dims… | f64 payload…
//! u32 config len | config JSON
//! ```

use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"RKT1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checkpoint has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint text is not UTF-8")]
    Utf8,
    #[error("tensor {name}: {msg}")]
    Shape { name: String, msg: String },
    #[error("checkpoint lacks tensor {0}")]
    Missing(String),
    #[error("checkpoint config: {0}")]
    Config(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    Kind { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: &[usize], data: Vec<f64>) -> Self {
        NamedTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub vocab_hash: u64,
    pub tensors: Vec<NamedTensor>,
    pub config: serde_json::Map<String, serde_json::Value>,
}

impl Container {
    pub fn push(&mut self, t: NamedTensor) {
        self.tensors.push(t);
    }

    pub fn get(&self, name: &str) -> Result<&NamedTensor, CheckpointError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    /// Looks up a tensor and checks its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&NamedTensor, CheckpointError> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(CheckpointError::Shape {
                name: name.to_string(),
                msg: format!("shape {:?}, expected {:?}", t.shape, shape),
            });
        }
        Ok(t)
    }

    pub fn config_field<V: serde::de::DeserializeOwned>(&self, key: &str) -> Result<V, CheckpointError> {
        let v = self
            .config
            .get(key)
            .ok_or_else(|| CheckpointError::Config(format!("missing key {key:?}")))?;
        serde_json::from_value(v.clone()).map_err(|e| CheckpointError::Config(format!("{key}: {e}")))
    }

    pub fn check_kind(&self, expected: &str) -> Result<(), CheckpointError> {
        let found: String = self.config_field("kind")?;
        if found != expected {
            return Err(CheckpointError::Kind {
                expected: expected.to_string(),
                found,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.vocab_hash.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let config = serde_json::to_string(&self.config).expect("json map serializes");
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let vocab_hash = r.u64("vocabulary hash")?;
        let count = r.u32("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(r.take(2, "tensor name length")?.try_into().unwrap());
            let name = std::str::from_utf8(r.take(len as usize, "tensor name")?)
                .map_err(|_| CheckpointError::Utf8)?
                .to_string();
            let rank = r.take(1, "tensor rank")?[0];
            let mut shape = Vec::with_capacity(rank as usize);
            for _ in 0..rank {
                shape.push(r.u64("tensor dims")? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or(CheckpointError::Truncated("tensor payload"))?;
            let data = r
                .take(n * 8, "tensor payload")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        let len = r.u32("config length")? as usize;
        let text = std::str::from_utf8(r.take(len, "config")?).map_err(|_| CheckpointError::Utf8)?;
        let config = serde_json::from_str(text).map_err(|e| CheckpointError::Config(e.to_string()))?;
        if r.remaining() > 0 {
            return Err(CheckpointError::TrailingBytes(r.remaining()));
        }
        Ok(Container {
            vocab_hash,
            tensors,
            config,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
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

    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.remaining() < n {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}
