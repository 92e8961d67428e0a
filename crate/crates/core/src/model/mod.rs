//! Mesh encoder / query decoder.
//!
//! Nodes are embedded (positional encoding plus condition embedding),
//! reordered along a Hilbert curve, grouped into fixed-size patches and
//! projected to tokens. The encoder runs self-attention over the tokens; each
//! query point is decoded independently by cross-attending to the encoder
//! memory, so query batches can be split arbitrarily.

mod attention;
mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attention::{attention, attention_weights, AttentionKind};
pub use checkpoint::{ModelCheckpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

use crate::backend::{BackendError, ParamStore, Tape, Tensor, Var};
use crate::conditions::{assemble_batch, ConditionError, ConditionSchema};
use crate::gce::{ConditionEmbedding, EmbeddingKind};
use crate::geometry::{BoundingBox, GeometryError, Mesh, SerializationPlan, DEFAULT_ORDER};
use crate::nn;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("mesh schema does not match the model schema")]
    SchemaMismatch,
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub patch_size: usize,
    #[serde(default = "default_order")]
    pub order: u32,
    pub d_model: usize,
    pub n_encoder: usize,
    pub n_decoder: usize,
    pub n_head: usize,
    #[serde(default)]
    pub attention: AttentionKind,
    pub out_dim: usize,
    #[serde(default)]
    pub encoder_only: bool,
    #[serde(default)]
    pub embedding: EmbeddingKind,
    /// Hidden width of the feedforward sublayers; `d_model` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_ff: Option<usize>,
}

fn default_order() -> u32 {
    DEFAULT_ORDER
}

impl ModelConfig {
    #[allow(clippy::too_many_arguments)]
    fn row(d_emb: usize, patch_size: usize, d_model: usize, n_encoder: usize, n_decoder: usize, n_head: usize, out_dim: usize) -> Self {
        Self {
            d_emb,
            patch_size,
            order: DEFAULT_ORDER,
            d_model,
            n_encoder,
            n_decoder,
            n_head,
            attention: AttentionKind::default(),
            out_dim,
            encoder_only: false,
            embedding: EmbeddingKind::Gce,
            d_ff: None,
        }
    }

    pub fn poisson() -> Self {
        Self::row(16, 4, 32, 2, 2, 1, 1)
    }

    pub fn darcy() -> Self {
        Self::row(32, 2, 128, 2, 2, 2, 1)
    }

    pub fn shapenet() -> Self {
        Self::row(32, 2, 128, 2, 2, 2, 4)
    }

    pub fn heat2d() -> Self {
        Self::row(32, 1, 192, 2, 2, 3, 1)
    }

    /// Outputs `u, v, σx, σy, τxy`.
    pub fn beam2d() -> Self {
        Self::row(32, 128, 128, 2, 2, 2, 5)
    }

    pub fn heatsink2d() -> Self {
        Self::row(32, 64, 128, 2, 2, 2, 1)
    }

    /// Encoder-only variant of a preset: four encoder blocks, no decoder.
    pub fn encoder_only_of(mut base: Self) -> Self {
        base.encoder_only = true;
        base.n_encoder = 4;
        base.n_decoder = 0;
        base
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "poisson" => Self::poisson(),
            "darcy" => Self::darcy(),
            "shapenet" => Self::shapenet(),
            "heat2d" => Self::heat2d(),
            "beam2d" => Self::beam2d(),
            "heatsink2d" => Self::heatsink2d(),
            _ => return None,
        })
    }

    pub fn d_ff(&self) -> usize {
        self.d_ff.unwrap_or(self.d_model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.d_emb == 0 || self.d_model == 0 || self.out_dim == 0 || self.patch_size == 0 || self.d_ff() == 0 {
            return bad("widths and patch_size must be positive");
        }
        if self.n_head == 0 || !self.d_model.is_multiple_of(self.n_head) {
            return bad("d_model must be divisible by n_head");
        }
        if self.order == 0 || self.order > crate::geometry::hilbert::MAX_ORDER {
            return bad("order must be in 1..=31");
        }
        if !self.encoder_only && self.n_decoder == 0 {
            return bad("n_decoder must be positive unless encoder_only");
        }
        Ok(())
    }
}

/// Activation used inside a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Wavelet,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockInfo {
    pub name: String,
    pub activation: Activation,
}

/// Decoder cross-attention weights of one layer and head, `[M, tokens]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub layer: usize,
    pub head: usize,
    pub weights: Tensor,
}

/// Encoder output for one mesh.
pub struct Encoded<'t> {
    pub memory: Var<'t>,
    pub plan: SerializationPlan,
    pub bbox: BoundingBox,
    node_embedding: Var<'t>,
}

impl<'t> Encoded<'t> {
    pub fn num_tokens(&self) -> usize {
        self.memory.shape()[0]
    }

    pub fn node_embedding(&self) -> &Var<'t> {
        &self.node_embedding
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    schema: ConditionSchema,
    embedding: ConditionEmbedding,
}

impl Model {
    pub fn new(config: ModelConfig, schema: ConditionSchema) -> Result<Self, ModelError> {
        config.validate()?;
        let embedding = ConditionEmbedding::new(config.embedding, schema.clone(), config.d_emb, "cond");
        Ok(Self { config, schema, embedding })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn schema(&self) -> &ConditionSchema {
        &self.schema
    }

    pub fn init(&self, seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &self.config;
        nn::init_mlp(&mut store, &mut rng, "posenc", 2, c.d_emb, c.d_emb);
        self.embedding.init(&mut store, &mut rng);
        nn::init_linear(&mut store, &mut rng, "patch", c.patch_size * c.d_emb, c.d_model, None);
        for i in 0..c.n_encoder {
            let b = format!("enc.{i}");
            nn::init_layernorm(&mut store, &format!("{b}.ln1"), c.d_model);
            attention::init_multi_head(&mut store, &mut rng, &format!("{b}.attn"), c.d_model);
            nn::init_layernorm(&mut store, &format!("{b}.ln2"), c.d_model);
            nn::init_mlp(&mut store, &mut rng, &format!("{b}.ff"), c.d_model, c.d_ff(), c.d_model);
        }
        if c.encoder_only {
            nn::init_linear(&mut store, &mut rng, "unpatch", c.d_model, c.patch_size * c.d_model, None);
            nn::init_linear(&mut store, &mut rng, "skip", c.d_emb, c.d_model, None);
        } else {
            nn::init_linear(&mut store, &mut rng, "query", c.d_emb, c.d_model, None);
            for i in 0..c.n_decoder {
                let b = format!("dec.{i}");
                nn::init_layernorm(&mut store, &format!("{b}.ln1"), c.d_model);
                nn::init_layernorm(&mut store, &format!("{b}.lnm"), c.d_model);
                attention::init_multi_head(&mut store, &mut rng, &format!("{b}.attn"), c.d_model);
                nn::init_layernorm(&mut store, &format!("{b}.ln2"), c.d_model);
                nn::init_mlp(&mut store, &mut rng, &format!("{b}.ff"), c.d_model, c.d_ff(), c.d_model);
            }
        }
        nn::init_layernorm(&mut store, "out.ln", c.d_model);
        nn::init_mlp(&mut store, &mut rng, "out.head", c.d_model, c.d_model, c.out_dim);
        store
    }

    /// Every activation site with its kind.
    pub fn activation_sites(&self) -> Vec<BlockInfo> {
        let c = &self.config;
        let mut names = vec!["posenc".to_string()];
        if !self.schema.is_empty() {
            names.push("cond.mlp".into());
        }
        names.extend((0..c.n_encoder).map(|i| format!("enc.{i}.ff")));
        if !c.encoder_only {
            names.extend((0..c.n_decoder).map(|i| format!("dec.{i}.ff")));
        }
        names.push("out.head".into());
        names.into_iter().map(|name| BlockInfo { name, activation: Activation::Wavelet }).collect()
    }

    /// Learnable encoding of bbox-normalized coordinates, `[n, d_emb]`.
    pub fn positional_encode<'t>(
        &self,
        tape: &'t Tape,
        params: &ParamStore,
        points: &[[f64; 2]],
        bbox: &BoundingBox,
    ) -> Result<Var<'t>, ModelError> {
        let coords: Vec<f64> = points.iter().flat_map(|&p| bbox.normalize(p)).collect();
        let x = tape.constant(Tensor::matrix(points.len(), 2, coords)?);
        Ok(nn::mlp(tape, params, "posenc", &x)?)
    }

    /// One `d_emb` vector per node: positional encoding plus condition embedding.
    pub fn embed_nodes<'t>(&self, tape: &'t Tape, params: &ParamStore, mesh: &Mesh) -> Result<Var<'t>, ModelError> {
        if mesh.schema() != &self.schema {
            return Err(ModelError::SchemaMismatch);
        }
        let pos = self.positional_encode(tape, params, mesh.nodes(), mesh.bbox())?;
        let batch = assemble_batch(mesh.records(), &self.schema)?;
        match self.embedding.forward(tape, params, &batch)? {
            Some(cond) => Ok(pos.add(&cond)?),
            None => Ok(pos),
        }
    }

    fn feedforward<'t>(&self, tape: &'t Tape, params: &ParamStore, block: &str, x: Var<'t>) -> Result<Var<'t>, BackendError> {
        let h = nn::layernorm(tape, params, &format!("{block}.ln2"), &x)?;
        x.add(&nn::mlp(tape, params, &format!("{block}.ff"), &h)?)
    }

    pub fn encode<'t>(&self, tape: &'t Tape, params: &ParamStore, mesh: &Mesh) -> Result<Encoded<'t>, ModelError> {
        let c = &self.config;
        let plan = SerializationPlan::build(mesh, c.order, c.patch_size)?;
        let node_embedding = self.embed_nodes(tape, params, mesh)?;
        let tokens = node_embedding
            .gather_rows(&plan.gather_index())?
            .reshape(&[plan.num_tokens(), c.patch_size * c.d_emb])?;
        let mut x = nn::linear(tape, params, "patch", &tokens)?;
        for i in 0..c.n_encoder {
            let b = format!("enc.{i}");
            let h = nn::layernorm(tape, params, &format!("{b}.ln1"), &x)?;
            let a = attention::multi_head(tape, params, &format!("{b}.attn"), &h, &h, c.n_head, c.attention, None)?;
            x = self.feedforward(tape, params, &b, x.add(&a)?)?;
        }
        Ok(Encoded { memory: x, plan, bbox: *mesh.bbox(), node_embedding })
    }

    /// Field values at `queries`, `[M, out_dim]`. Each output row depends only
    /// on its own query, the memory and the parameters.
    pub fn decode<'t>(
        &self,
        tape: &'t Tape,
        params: &ParamStore,
        encoded: &Encoded<'t>,
        queries: &[[f64; 2]],
        mut attn_out: Option<&mut Vec<AttentionMap>>,
    ) -> Result<Var<'t>, ModelError> {
        let c = &self.config;
        if c.encoder_only {
            return Err(ModelError::Unsupported("encoder-only model has no decoder".into()));
        }
        if queries.is_empty() {
            return Err(ModelError::Config("no query points".into()));
        }
        let pos = self.positional_encode(tape, params, queries, &encoded.bbox)?;
        let mut q = nn::linear(tape, params, "query", &pos)?;
        for i in 0..c.n_decoder {
            let b = format!("dec.{i}");
            let h = nn::layernorm(tape, params, &format!("{b}.ln1"), &q)?;
            let m = nn::layernorm(tape, params, &format!("{b}.lnm"), &encoded.memory)?;
            let mut maps = attn_out.is_some().then(Vec::new);
            let a = attention::multi_head(tape, params, &format!("{b}.attn"), &h, &m, c.n_head, c.attention, maps.as_mut())?;
            if let (Some(out), Some(maps)) = (attn_out.as_deref_mut(), maps) {
                out.extend(maps.into_iter().enumerate().map(|(head, weights)| AttentionMap { layer: i, head, weights }));
            }
            q = self.feedforward(tape, params, &b, q.add(&a)?)?;
        }
        self.head(tape, params, &q)
    }

    fn head<'t>(&self, tape: &'t Tape, params: &ParamStore, x: &Var<'t>) -> Result<Var<'t>, ModelError> {
        let h = nn::layernorm(tape, params, "out.ln", x)?;
        Ok(nn::mlp(tape, params, "out.head", &h)?)
    }

    /// Encoder-only prediction at the mesh nodes, in input node order.
    pub fn decode_nodes<'t>(&self, tape: &'t Tape, params: &ParamStore, encoded: &Encoded<'t>) -> Result<Var<'t>, ModelError> {
        let c = &self.config;
        if !c.encoder_only {
            return Err(ModelError::Unsupported("decode_nodes requires encoder_only".into()));
        }
        let plan = &encoded.plan;
        let slots = nn::linear(tape, params, "unpatch", &encoded.memory)?
            .reshape(&[plan.num_tokens() * c.patch_size, c.d_model])?;
        // slot of each original node along the curve
        let mut back = vec![None; plan.num_nodes()];
        for (slot, &node) in plan.order.perm.iter().enumerate() {
            back[node] = Some(slot);
        }
        let per_node = slots.gather_rows(&back)?;
        let skip = nn::linear(tape, params, "skip", &encoded.node_embedding)?;
        self.head(tape, params, &per_node.add(&skip)?)
    }

    /// Full taped forward pass. Encoder-only models require `queries` to be
    /// the mesh nodes themselves.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        params: &ParamStore,
        mesh: &Mesh,
        queries: &[[f64; 2]],
    ) -> Result<Var<'t>, ModelError> {
        let encoded = self.encode(tape, params, mesh)?;
        if self.config.encoder_only {
            if queries != mesh.nodes() {
                return Err(ModelError::Unsupported("encoder-only model predicts at mesh nodes only".into()));
            }
            return self.decode_nodes(tape, params, &encoded);
        }
        self.decode(tape, params, &encoded, queries, None)
    }

    /// Untaped prediction, decoding queries in chunks of `batch` rows.
    pub fn predict(&self, params: &ParamStore, mesh: &Mesh, queries: &[[f64; 2]], batch: usize) -> Result<Tensor, ModelError> {
        let tape = Tape::inference();
        let encoded = self.encode(&tape, params, mesh)?;
        if self.config.encoder_only {
            if queries != mesh.nodes() {
                return Err(ModelError::Unsupported("encoder-only model predicts at mesh nodes only".into()));
            }
            return Ok(self.decode_nodes(&tape, params, &encoded)?.value().clone());
        }
        let mut data = Vec::with_capacity(queries.len() * self.config.out_dim);
        for chunk in queries.chunks(batch.max(1)) {
            data.extend_from_slice(self.decode(&tape, params, &encoded, chunk, None)?.value().data());
        }
        Ok(Tensor::matrix(queries.len(), self.config.out_dim, data)?)
    }

    /// Decoder cross-attention weights for every layer and head.
    pub fn decoder_attention(&self, params: &ParamStore, mesh: &Mesh, queries: &[[f64; 2]]) -> Result<Vec<AttentionMap>, ModelError> {
        if self.config.attention != AttentionKind::DotProduct {
            return Err(ModelError::Unsupported("attention export requires dot_product attention".into()));
        }
        let tape = Tape::inference();
        let encoded = self.encode(&tape, params, mesh)?;
        let mut maps = Vec::new();
        self.decode(&tape, params, &encoded, queries, Some(&mut maps))?;
        Ok(maps)
    }
}
