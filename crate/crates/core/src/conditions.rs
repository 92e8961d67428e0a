//! Per-node condition groups (physical parameters, initial and boundary
//! data) with presence flags.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::Tensor;

/// Group names used by the thermal benchmarks.
pub const DIRICHLET: &str = "dirichlet";
/// Neumann group layout: `[n_x, n_y, dT/dx, dT/dy]`.
pub const NEUMANN: &str = "neumann";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditionError {
    #[error("duplicate condition group `{0}`")]
    DuplicateGroup(String),
    #[error("condition group `{0}` must have dim >= 1")]
    ZeroDim(String),
    #[error("unknown condition group `{0}`")]
    UnknownGroup(String),
    #[error("group `{group}` expects {expected} values, got {got}")]
    DimMismatch { group: String, expected: usize, got: usize },
    #[error("non-finite value in group `{0}`")]
    NonFinite(String),
    #[error("record has {got} groups, schema has {expected}")]
    SchemaMismatch { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionGroup {
    pub name: String,
    pub dim: usize,
}

/// Ordered list of condition groups. The order fixes the layout of every
/// assembled vector and of the embedding parameters.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ConditionSchema {
    groups: Vec<ConditionGroup>,
}

impl<'de> Deserialize<'de> for ConditionSchema {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let groups = Vec::<ConditionGroup>::deserialize(d)?;
        ConditionSchema::new(groups).map_err(serde::de::Error::custom)
    }
}

impl ConditionSchema {
    pub fn new(groups: Vec<ConditionGroup>) -> Result<Self, ConditionError> {
        for (i, g) in groups.iter().enumerate() {
            if g.dim == 0 {
                return Err(ConditionError::ZeroDim(g.name.clone()));
            }
            if groups[..i].iter().any(|o| o.name == g.name) {
                return Err(ConditionError::DuplicateGroup(g.name.clone()));
            }
        }
        Ok(Self { groups })
    }

    /// Convenience constructor from `(name, dim)` pairs.
    pub fn from_pairs(pairs: &[(&str, usize)]) -> Result<Self, ConditionError> {
        Self::new(pairs.iter().map(|(n, d)| ConditionGroup { name: n.to_string(), dim: *d }).collect())
    }

    /// Dirichlet temperature plus Neumann normal/gradient, as used by the
    /// thermal datasets.
    pub fn thermal() -> Self {
        Self::from_pairs(&[(DIRICHLET, 1), (NEUMANN, 4)]).expect("static schema")
    }

    pub fn groups(&self) -> &[ConditionGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, ConditionError> {
        self.groups
            .iter()
            .position(|g| g.name == name)
            .ok_or_else(|| ConditionError::UnknownGroup(name.to_string()))
    }

    /// Σ dim_k: width of the zero-filled raw concatenation.
    pub fn raw_width(&self) -> usize {
        self.groups.iter().map(|g| g.dim).sum()
    }

    /// Σ (dim_k + 1): width after per-group expansion.
    pub fn expanded_width(&self) -> usize {
        self.groups.iter().map(|g| g.dim + 1).sum()
    }
}

/// Values carried by one node; `None` marks an absent group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    values: Vec<Option<Vec<f64>>>,
}

impl ConditionRecord {
    pub fn empty(schema: &ConditionSchema) -> Self {
        Self { values: vec![None; schema.len()] }
    }

    pub fn set(&mut self, schema: &ConditionSchema, group: &str, value: Vec<f64>) -> Result<(), ConditionError> {
        let k = schema.index_of(group)?;
        let g = &schema.groups()[k];
        if value.len() != g.dim {
            return Err(ConditionError::DimMismatch { group: g.name.clone(), expected: g.dim, got: value.len() });
        }
        if value.iter().any(|v| !v.is_finite()) {
            return Err(ConditionError::NonFinite(g.name.clone()));
        }
        self.values[k] = Some(value);
        Ok(())
    }

    pub fn with(mut self, schema: &ConditionSchema, group: &str, value: Vec<f64>) -> Result<Self, ConditionError> {
        self.set(schema, group, value)?;
        Ok(self)
    }

    pub fn clear(&mut self, schema: &ConditionSchema, group: &str) -> Result<(), ConditionError> {
        let k = schema.index_of(group)?;
        self.values[k] = None;
        Ok(())
    }

    pub fn get(&self, schema: &ConditionSchema, group: &str) -> Result<Option<&[f64]>, ConditionError> {
        Ok(self.values[schema.index_of(group)?].as_deref())
    }

    pub fn values(&self) -> &[Option<Vec<f64>>] {
        &self.values
    }

    pub fn presence(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }

    pub fn validate(&self, schema: &ConditionSchema) -> Result<(), ConditionError> {
        if self.values.len() != schema.len() {
            return Err(ConditionError::SchemaMismatch { expected: schema.len(), got: self.values.len() });
        }
        for (v, g) in self.values.iter().zip(schema.groups()) {
            if let Some(v) = v {
                if v.len() != g.dim {
                    return Err(ConditionError::DimMismatch { group: g.name.clone(), expected: g.dim, got: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(ConditionError::NonFinite(g.name.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Per-group raw blocks (zeros where absent) and the presence mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Assembled {
    pub blocks: Vec<Vec<f64>>,
    pub presence: Vec<bool>,
}

impl Assembled {
    /// Zero-filled concatenation of all blocks.
    pub fn raw(&self) -> Vec<f64> {
        self.blocks.concat()
    }
}

pub fn assemble(record: &ConditionRecord, schema: &ConditionSchema) -> Result<Assembled, ConditionError> {
    record.validate(schema)?;
    let blocks = record
        .values
        .iter()
        .zip(schema.groups())
        .map(|(v, g)| v.clone().unwrap_or_else(|| vec![0.0; g.dim]))
        .collect();
    Ok(Assembled { blocks, presence: record.presence() })
}

/// Column-major batch layout for `L` records: one `[L, dim_k]` tensor and one
/// 0/1 mask of length `L` per group.
#[derive(Clone, Debug, PartialEq)]
pub struct AssembledBatch {
    pub blocks: Vec<Tensor>,
    pub masks: Vec<Tensor>,
}

impl AssembledBatch {
    pub fn len(&self) -> usize {
        self.masks.first().map_or(0, Tensor::numel)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[L, Σ dim_k]` zero-filled raw values.
    pub fn raw(&self) -> Tensor {
        self.concat_with(false)
    }

    /// `[L, Σ dim_k + K]` raw values followed by the presence flags.
    pub fn raw_with_flags(&self) -> Tensor {
        self.concat_with(true)
    }

    fn concat_with(&self, flags: bool) -> Tensor {
        let n = self.len();
        let width: usize = self.blocks.iter().map(Tensor::cols).sum::<usize>() + if flags { self.masks.len() } else { 0 };
        let mut data = Vec::with_capacity(n * width);
        for r in 0..n {
            for b in &self.blocks {
                data.extend_from_slice(b.row(r));
            }
            if flags {
                data.extend(self.masks.iter().map(|m| m.data()[r]));
            }
        }
        Tensor::matrix(n, width, data).expect("consistent widths")
    }
}

pub fn assemble_batch(records: &[ConditionRecord], schema: &ConditionSchema) -> Result<AssembledBatch, ConditionError> {
    let n = records.len();
    let mut blocks: Vec<Vec<f64>> = schema.groups().iter().map(|g| Vec::with_capacity(n * g.dim)).collect();
    let mut masks: Vec<Vec<f64>> = vec![Vec::with_capacity(n); schema.len()];
    for rec in records {
        let a = assemble(rec, schema)?;
        for (k, block) in a.blocks.iter().enumerate() {
            blocks[k].extend_from_slice(block);
            masks[k].push(if a.presence[k] { 1.0 } else { 0.0 });
        }
    }
    Ok(AssembledBatch {
        blocks: blocks
            .into_iter()
            .zip(schema.groups())
            .map(|(b, g)| Tensor::matrix(n, g.dim, b).expect("block size"))
            .collect(),
        masks: masks.into_iter().map(Tensor::vector).collect(),
    })
}

/// Single-vector thermal boundary encoding `[T, n_x, n_y, dT/dx, dT/dy]`
/// with absent components zero-filled. This is the ambiguous baseline the
/// gated embedding is compared against.
pub fn encode_bc_vector(record: &ConditionRecord, schema: &ConditionSchema) -> Result<[f64; 5], ConditionError> {
    let mut out = [0.0; 5];
    if let Some(t) = record.get(schema, DIRICHLET)? {
        out[0] = t[0];
    }
    if let Some(n) = record.get(schema, NEUMANN)? {
        out[1..5].copy_from_slice(&n[..4]);
    }
    Ok(out)
}
