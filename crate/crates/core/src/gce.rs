//! Gated condition embedding.
//!
//! Each condition group `k` of width `d_k` gets its own affine expansion
//! `h_k = v_k · W_k + b_k` into `d_k + 1` dimensions. A parameter-free gate
//! replaces `h_k` with the zero vector when the group is absent at a node, so
//! a present all-zero value (which lands on `b_k`) stays distinguishable from
//! a missing one (which lands on the origin). The gated blocks are
//! concatenated and passed through a two-layer wavelet MLP.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ParamStore, Tape, Var};
use crate::conditions::{AssembledBatch, ConditionSchema};
use crate::nn;

/// Bias range for the per-group expansions. Strictly positive so present
/// zeros are separated from absent groups from the first step.
pub const GCE_BIAS_RANGE: (f64, f64) = (0.1, 0.5);

/// How per-node conditions are turned into an embedding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    /// Gated condition embedding.
    #[default]
    Gce,
    /// Plain feedforward network over the zero-filled raw values.
    Feedforward,
    /// Feedforward network over the raw values plus one presence flag per group.
    FeedforwardFlags,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GceLayer {
    schema: ConditionSchema,
    d_emb: usize,
    prefix: String,
}

impl GceLayer {
    pub fn new(schema: ConditionSchema, d_emb: usize, prefix: &str) -> Self {
        Self { schema, d_emb, prefix: prefix.to_string() }
    }

    pub fn schema(&self) -> &ConditionSchema {
        &self.schema
    }

    fn group_name(&self, k: usize) -> String {
        format!("{}.group.{}", self.prefix, self.schema.groups()[k].name)
    }

    /// Name prefix of the expansion for group `k` (`.w` is `[d_k, d_k+1]`, `.b` is `[d_k+1]`).
    pub fn group_param(&self, k: usize) -> String {
        self.group_name(k)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        for (k, g) in self.schema.groups().iter().enumerate() {
            nn::init_linear(store, rng, &self.group_name(k), g.dim, g.dim + 1, Some(GCE_BIAS_RANGE));
        }
        nn::init_mlp(store, rng, &format!("{}.mlp", self.prefix), self.schema.expanded_width(), self.d_emb, self.d_emb);
    }

    /// Concatenation of all gated expansions, `[L, Σ(d_k + 1)]`.
    pub fn gated_blocks<'t>(&self, tape: &'t Tape, params: &ParamStore, batch: &AssembledBatch) -> Result<Var<'t>, BackendError> {
        if batch.blocks.len() != self.schema.len() {
            return Err(BackendError::Shape(format!(
                "batch has {} groups, schema {}",
                batch.blocks.len(),
                self.schema.len()
            )));
        }
        let mut parts = Vec::with_capacity(self.schema.len());
        for k in 0..self.schema.len() {
            let values = tape.constant(batch.blocks[k].clone());
            let h = nn::linear(tape, params, &self.group_name(k), &values)?;
            let gate = tape.constant(batch.masks[k].clone());
            parts.push(h.row_scale(&gate)?);
        }
        Var::concat_cols(&parts)
    }

    /// One `d_emb` embedding per node, `[L, d_emb]`.
    pub fn forward<'t>(&self, tape: &'t Tape, params: &ParamStore, batch: &AssembledBatch) -> Result<Var<'t>, BackendError> {
        let h = self.gated_blocks(tape, params, batch)?;
        nn::mlp(tape, params, &format!("{}.mlp", self.prefix), &h)
    }
}

/// Condition embedding selected by [`EmbeddingKind`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionEmbedding {
    kind: EmbeddingKind,
    gce: GceLayer,
}

impl ConditionEmbedding {
    pub fn new(kind: EmbeddingKind, schema: ConditionSchema, d_emb: usize, prefix: &str) -> Self {
        Self { kind, gce: GceLayer::new(schema, d_emb, prefix) }
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn gce(&self) -> &GceLayer {
        &self.gce
    }

    fn input_width(&self) -> usize {
        let s = self.gce.schema();
        match self.kind {
            EmbeddingKind::Gce => s.expanded_width(),
            EmbeddingKind::Feedforward => s.raw_width(),
            EmbeddingKind::FeedforwardFlags => s.raw_width() + s.len(),
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        if self.gce.schema().is_empty() {
            return;
        }
        match self.kind {
            EmbeddingKind::Gce => self.gce.init(store, rng),
            _ => nn::init_mlp(store, rng, &format!("{}.mlp", self.gce.prefix), self.input_width(), self.gce.d_emb, self.gce.d_emb),
        }
    }

    /// `[L, d_emb]`, or `None` when the schema has no groups.
    pub fn forward<'t>(&self, tape: &'t Tape, params: &ParamStore, batch: &AssembledBatch) -> Result<Option<Var<'t>>, BackendError> {
        if self.gce.schema().is_empty() {
            return Ok(None);
        }
        let name = format!("{}.mlp", self.gce.prefix);
        let out = match self.kind {
            EmbeddingKind::Gce => self.gce.forward(tape, params, batch)?,
            EmbeddingKind::Feedforward => nn::mlp(tape, params, &name, &tape.constant(batch.raw()))?,
            EmbeddingKind::FeedforwardFlags => nn::mlp(tape, params, &name, &tape.constant(batch.raw_with_flags()))?,
        };
        Ok(Some(out))
    }
}
