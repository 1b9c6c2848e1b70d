//! Versioned binary container for model parameters.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes   "EMOINTM\0"
//! version      u32       FORMAT_VERSION
//! header_len   u32       byte length of the JSON header
//! header       UTF-8 JSON {"kind": str, "meta": object, "tensors": [{"name", "rows", "cols"}]}
//! payload      for each tensor in header order: rows*cols f64, row-major, little-endian
//! ```
//!
//! Files with a different version, trailing bytes, or a short payload are
//! rejected before any model is constructed.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::matrix::Matrix;
use super::params::ParamSet;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"EMOINTM\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: Map<String, Value>,
    tensors: Vec<TensorHeader>,
}

/// In-memory form of a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: String,
    pub meta: Map<String, Value>,
    pub tensors: Vec<(String, Matrix)>,
}

impl ModelFile {
    pub fn new(kind: &str) -> Self {
        ModelFile {
            kind: kind.to_string(),
            meta: Map::new(),
            tensors: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn push_params<P: ParamSet>(&mut self, params: &P) {
        for (name, m) in params.params() {
            self.tensors.push((name, m.clone()));
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, m)| TensorHeader {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
        };
        let header_json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self.tensors.iter().map(|(_, m)| m.as_slice().len() * 8).sum();
        let mut out = Vec::with_capacity(16 + header_json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
        out.extend_from_slice(&header_json);
        for (_, m) in &self.tensors {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: String| Error::ModelFormat(msg);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(fail("not a model file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(fail(format!(
                "unsupported format version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let header_end = 16usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| fail("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(&bytes[16..header_end]).map_err(|e| fail(format!("bad header: {e}")))?;

        let expected: usize = header
            .tensors
            .iter()
            .map(|t| t.rows.saturating_mul(t.cols).saturating_mul(8))
            .fold(0usize, |a, b| a.saturating_add(b));
        let payload = &bytes[header_end..];
        if payload.len() != expected {
            return Err(fail(format!(
                "payload is {} bytes, header declares {expected}{}",
                payload.len(),
                if payload.len() < expected { " (truncated file)" } else { "" }
            )));
        }

        let mut offset = 0;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for t in header.tensors {
            let n = t.rows * t.cols;
            let data: Vec<f64> = payload[offset..offset + n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset += n * 8;
            tensors.push((t.name, Matrix::from_vec(t.rows, t.cols, data)?));
        }
        Ok(ModelFile {
            kind: header.kind,
            meta: header.meta,
            tensors,
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        ModelFile::from_bytes(&bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        ModelFile::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::ModelFormat(format!("expected a {kind} model, found {}", self.kind)));
        }
        Ok(())
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::ModelFormat(format!("missing string field {key:?}")))
    }

    pub fn meta_usize(&self, key: &str) -> Result<usize> {
        self.meta
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::ModelFormat(format!("missing integer field {key:?}")))
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        self.meta
            .get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::ModelFormat(format!("missing number field {key:?}")))
    }

    pub fn meta_bool(&self, key: &str) -> Result<bool> {
        self.meta
            .get(key)
            .and_then(Value::as_bool)
            .ok_or_else(|| Error::ModelFormat(format!("missing boolean field {key:?}")))
    }

    /// Copies tensors, in order, into a freshly shaped parameter set.
    /// Names and shapes must match exactly.
    pub fn load_into<P: ParamSet>(&self, target: &mut P) -> Result<()> {
        let names: Vec<(String, (usize, usize))> =
            target.params().into_iter().map(|(n, m)| (n, m.shape())).collect();
        if names.len() != self.tensors.len() {
            return Err(Error::ModelFormat(format!(
                "expected {} tensors, file has {}",
                names.len(),
                self.tensors.len()
            )));
        }
        for ((want_name, want_shape), (name, m)) in names.iter().zip(&self.tensors) {
            if want_name != name {
                return Err(Error::ModelFormat(format!("expected tensor {want_name}, found {name}")));
            }
            if *want_shape != m.shape() {
                return Err(Error::ModelFormat(format!(
                    "tensor {name}: expected shape {want_shape:?}, found {:?}",
                    m.shape()
                )));
            }
        }
        for (dst, (_, src)) in target.params_mut().into_iter().zip(&self.tensors) {
            dst.as_mut_slice().copy_from_slice(src.as_slice());
        }
        Ok(())
    }
}
