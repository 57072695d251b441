//! The `PSND` model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PSND"            4 bytes magic
//! version           u32
//! manifest_len      u32
//! manifest          manifest_len bytes of UTF-8 JSON
//! tensor blobs      float32 LE, concatenated in manifest "tensors" order
//! ```
//!
//! The manifest always carries `"kind"` and `"tensors"` (a list of
//! `{"name", "shape"}`); other keys depend on the kind. Encoding is
//! deterministic, so decode → encode reproduces the input bytes.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"PSND";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("version mismatch: {0}")]
    VersionMismatch(String),
    #[error("corrupt container: {0}")]
    Corrupt(String),
    #[error("missing tensor {0}")]
    MissingTensor(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    /// Manifest without the `tensors` key, which is derived from `tensors`.
    pub manifest: Map<String, Value>,
    pub tensors: Vec<TensorEntry>,
}

impl Container {
    /// `manifest` must be a JSON object.
    pub fn new(manifest: Value, tensors: Vec<TensorEntry>) -> Self {
        let manifest = match manifest {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        Self { manifest, tensors }
    }

    pub fn kind(&self) -> Option<&str> {
        self.manifest.get("kind").and_then(Value::as_str)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), ContainerError> {
        match self.kind() {
            Some(k) if k == kind => Ok(()),
            other => Err(ContainerError::VersionMismatch(format!(
                "expected a {kind} container, found {other:?}"
            ))),
        }
    }

    pub fn manifest_field<T: DeserializeOwned>(&self, key: &str) -> Result<T, ContainerError> {
        let v = self
            .manifest
            .get(key)
            .ok_or_else(|| ContainerError::Corrupt(format!("manifest lacks {key:?}")))?;
        serde_json::from_value(v.clone())
            .map_err(|e| ContainerError::Corrupt(format!("manifest field {key:?}: {e}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&[f32], ContainerError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.data[..])
            .ok_or_else(|| ContainerError::MissingTensor(name.to_string()))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut manifest = self.manifest.clone();
        let specs: Vec<TensorSpec> = self
            .tensors
            .iter()
            .map(|t| TensorSpec {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect();
        manifest.insert(
            "tensors".into(),
            serde_json::to_value(specs).expect("tensor specs serialize"),
        );
        let manifest_bytes = serde_json::to_vec(&manifest).expect("manifest serializes");
        let data_len: usize = self.tensors.iter().map(|t| t.data.len() * 4).sum();
        let mut out = Vec::with_capacity(12 + manifest_bytes.len() + data_len);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest_bytes);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ContainerError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(ContainerError::VersionMismatch("missing PSND magic".into()));
        }
        if bytes.len() < 12 {
            return Err(ContainerError::Corrupt("truncated header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(ContainerError::VersionMismatch(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let manifest_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if body.len() < manifest_len {
            return Err(ContainerError::Corrupt("truncated manifest".into()));
        }
        let mut manifest: Map<String, Value> = serde_json::from_slice(&body[..manifest_len])
            .map_err(|e| ContainerError::Corrupt(format!("manifest: {e}")))?;
        let specs: Vec<TensorSpec> = match manifest.remove("tensors") {
            Some(v) => serde_json::from_value(v)
                .map_err(|e| ContainerError::Corrupt(format!("tensor list: {e}")))?,
            None => return Err(ContainerError::Corrupt("manifest lacks tensor list".into())),
        };
        let mut data = &body[manifest_len..];
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in specs {
            let count = spec
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| ContainerError::Corrupt(format!("tensor {} too large", spec.name)))?;
            let nbytes = count
                .checked_mul(4)
                .filter(|&n| n <= data.len())
                .ok_or_else(|| ContainerError::Corrupt(format!("tensor {} truncated", spec.name)))?;
            let values = data[..nbytes]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            data = &data[nbytes..];
            tensors.push(TensorEntry {
                name: spec.name,
                shape: spec.shape,
                data: values,
            });
        }
        if !data.is_empty() {
            return Err(ContainerError::Corrupt(format!(
                "{} trailing bytes after tensors",
                data.len()
            )));
        }
        Ok(Self { manifest, tensors })
    }
}
