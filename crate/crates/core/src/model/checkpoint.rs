use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError};
use crate::backend::{BackendError, ParamCheckpoint, ParamStore};
use crate::conditions::ConditionSchema;

pub const CHECKPOINT_FORMAT: &str = "meshquery-model";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Model config, condition schema and parameters in one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub schema: ConditionSchema,
    pub params: ParamCheckpoint,
    /// Output column names; `out{i}` when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<String>,
}

impl ModelCheckpoint {
    pub fn new(model: &Model, params: &ParamStore) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config().clone(),
            schema: model.schema().clone(),
            params: params.to_checkpoint(),
            fields: Vec::new(),
        }
    }

    pub fn with_fields(mut self, fields: Vec<String>) -> Self {
        self.fields = fields;
        self
    }

    pub fn field_names(&self) -> Vec<String> {
        if self.fields.len() == self.config.out_dim {
            self.fields.clone()
        } else {
            (0..self.config.out_dim).map(|i| format!("out{i}")).collect()
        }
    }

    /// Rebuilds the model and checks that every expected parameter is present
    /// with the expected shape.
    pub fn into_parts(self) -> Result<(Model, ParamStore), ModelError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(BackendError::Checkpoint(format!("unsupported checkpoint {} v{}", self.format, self.version)).into());
        }
        let model = Model::new(self.config, self.schema)?;
        let params = ParamStore::from_checkpoint(self.params)?;
        let reference = model.init(0);
        for (name, t) in reference.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(BackendError::Checkpoint(format!("{name}: shape {:?}, expected {:?}", got.shape(), t.shape())).into());
            }
        }
        if params.len() != reference.len() {
            return Err(BackendError::Checkpoint("unexpected extra parameters".into()).into());
        }
        Ok((model, params))
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), ModelError> {
        serde_json::to_writer(writer, self).map_err(|e| BackendError::Checkpoint(e.to_string()).into())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self, ModelError> {
        serde_json::from_reader(reader).map_err(|e| BackendError::Checkpoint(e.to_string()).into())
    }
}
