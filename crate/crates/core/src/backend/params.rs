use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BackendError, Tensor};

pub const CHECKPOINT_FORMAT: &str = "meshquery-params";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named learnable tensors. Iteration order is lexicographic by name, which
/// keeps optimizer updates and serialization deterministic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        self.tensors.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, BackendError> {
        self.tensors.get(name).ok_or_else(|| BackendError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, BackendError> {
        self.tensors.get_mut(name).ok_or_else(|| BackendError::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn to_checkpoint(&self) -> ParamCheckpoint {
        ParamCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            params: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), StoredTensor { shape: t.shape().to_vec(), values: t.data().to_vec() }))
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: ParamCheckpoint) -> Result<Self, BackendError> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(BackendError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut store = ParamStore::new();
        for (name, t) in ckpt.params {
            store.insert(&name, Tensor::new(t.shape, t.values)?);
        }
        Ok(store)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), BackendError> {
        serde_json::to_writer(writer, &self.to_checkpoint()).map_err(|e| BackendError::Checkpoint(e.to_string()))
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self, BackendError> {
        let ckpt: ParamCheckpoint =
            serde_json::from_reader(reader).map_err(|e| BackendError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(ckpt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    /// Row-major.
    pub values: Vec<f64>,
}

/// On-disk parameter map with a versioned header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamCheckpoint {
    pub format: String,
    pub version: u32,
    pub params: BTreeMap<String, StoredTensor>,
}

/// Gradient of a scalar loss, keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub(crate) fn from_map(grads: BTreeMap<String, Tensor>) -> Self {
        Self { grads }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_finite(&self) -> bool {
        self.grads.values().all(Tensor::is_finite)
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.values().map(|t| t.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }
}
