//! Embedding-layer and patch-size ablations.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::tasks::{evaluate_items, SupervisedItem, SupervisedTask, SupervisedTaskConfig};
use super::{train, TrainConfig, TrainError};
use crate::backend::Tape;
use crate::benchmarks::{
    ambiguity_dataset, beam_dataset, beam_instance, beam_mesh_nodes, heatsink_schema, AmbiguitySpec, BeamDatasetConfig, BeamSpec,
    TopBoundary,
};
use crate::gce::EmbeddingKind;
use crate::geometry::SerializationPlan;
use crate::model::{Model, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GceAblationConfig {
    pub data: AmbiguitySpec,
    /// The embedding kind is replaced per variant.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub task: SupervisedTaskConfig,
    pub kinds: Vec<EmbeddingKind>,
}

impl Default for GceAblationConfig {
    fn default() -> Self {
        Self {
            data: AmbiguitySpec::default(),
            model: ModelConfig { out_dim: 1, ..ModelConfig::poisson() },
            train: TrainConfig { epochs: 800, batch_size: 10, lr: 3e-3, ..TrainConfig::poisson() },
            task: SupervisedTaskConfig::default(),
            kinds: vec![EmbeddingKind::Feedforward, EmbeddingKind::FeedforwardFlags, EmbeddingKind::Gce],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GceAblationRow {
    pub embedding: EmbeddingKind,
    pub half: TopBoundary,
    /// Mean held-out relative L2 over the half's instances.
    pub rel_l2: f64,
    pub epochs_run: usize,
}

/// Trains each embedding variant on the same ambiguity data and seed and
/// reports the best checkpoint's error on each half.
pub fn gce_ablation(config: &GceAblationConfig, seed: u64) -> Result<Vec<GceAblationRow>, TrainError> {
    let set = ambiguity_dataset(&config.data, seed)?;
    let train_items = set.iter().map(|i| SupervisedItem::try_from(&i.train)).collect::<Result<Vec<_>, _>>()?;
    let test_items = set.iter().map(|i| SupervisedItem::try_from(&i.test)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for &kind in &config.kinds {
        let model = Model::new(ModelConfig { embedding: kind, ..config.model.clone() }, heatsink_schema())?;
        let params = model.init(seed);
        let mut task = SupervisedTask::new(model.clone(), train_items.clone(), test_items.clone(), config.train.batch_size, config.task.clone())?;
        let tc = TrainConfig { seed, ..config.train.clone() };
        let out = train(&tc, params, &mut task, None)?;
        let errs = evaluate_items(&model, &out.best, &test_items, None, config.task.eval_batch)?;
        for half in [TopBoundary::Dirichlet, TopBoundary::Neumann] {
            let e: Vec<f64> = set.iter().zip(&errs).filter(|(i, _)| i.top == half).map(|(_, e)| *e).collect();
            rows.push(GceAblationRow { embedding: kind, half, rel_l2: e.iter().sum::<f64>() / e.len() as f64, epochs_run: out.report.history.len() });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PatchAblationConfig {
    pub sizes: Vec<usize>,
    /// The patch size is replaced per variant.
    pub model: ModelConfig,
    pub spec: BeamSpec,
    /// Zero epochs skips training and reports no error.
    pub train: TrainConfig,
    pub data: BeamDatasetConfig,
    pub task: SupervisedTaskConfig,
    /// Encoder passes timed per size; the minimum is reported.
    pub timing_repeats: usize,
}

impl Default for PatchAblationConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1, 2, 4, 8, 16, 32, 64, 128],
            model: ModelConfig { d_emb: 16, d_model: 32, ..ModelConfig::beam2d() },
            spec: BeamSpec::default(),
            train: TrainConfig { epochs: 0, batch_size: 4, ..TrainConfig::beam2d() },
            data: BeamDatasetConfig { train_instances: 8, train_points: 200, test_instances: 4, test_points: 500 },
            task: SupervisedTaskConfig { metric_field: Some(0), ..Default::default() },
            timing_repeats: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchAblationRow {
    pub patch_size: usize,
    pub tokens: usize,
    /// `tokens² × heads × bytes` for one encoder attention score buffer.
    pub attn_bytes: u64,
    pub encode_s: f64,
    pub rel_l2: Option<f64>,
}

pub fn attention_buffer_bytes(tokens: usize, heads: usize, precision_bits: u32) -> u64 {
    (tokens as u64).pow(2) * heads as u64 * (precision_bits as u64 / 8)
}

/// Sweeps patch sizes on the beam mesh.
pub fn patch_ablation(config: &PatchAblationConfig, seed: u64) -> Result<Vec<PatchAblationRow>, TrainError> {
    let nodes = beam_mesh_nodes(&config.spec);
    let (train_set, test_set) = if config.train.epochs > 0 { beam_dataset(&config.spec, &config.data, seed)? } else { (Vec::new(), Vec::new()) };
    let to_items = |set: &[crate::benchmarks::BeamSample]| {
        set.iter()
            .map(|s| SupervisedItem::try_from(&beam_instance(&config.spec, &nodes, s.moment, s.queries.clone())?))
            .collect::<Result<Vec<_>, TrainError>>()
    };
    let (train_items, test_items) = (to_items(&train_set)?, to_items(&test_set)?);
    let probe = beam_instance(&config.spec, &nodes, 1.0, Vec::new())?.mesh;
    let mut rows = Vec::new();
    for &p in &config.sizes {
        let model = Model::new(ModelConfig { patch_size: p, ..config.model.clone() }, probe.schema().clone())?;
        let params = model.init(seed);
        let tokens = SerializationPlan::build(&probe, model.config().order, p).map_err(crate::model::ModelError::from)?.num_tokens();
        let mut best = f64::INFINITY;
        for _ in 0..config.timing_repeats.max(1) {
            let tape = Tape::inference();
            let start = Instant::now();
            model.encode(&tape, &params, &probe)?;
            best = best.min(start.elapsed().as_secs_f64());
        }
        let rel_l2 = if config.train.epochs > 0 {
            let mut task =
                SupervisedTask::new(model.clone(), train_items.clone(), test_items.clone(), config.train.batch_size, config.task.clone())?;
            let out = train(&TrainConfig { seed, ..config.train.clone() }, params, &mut task, None)?;
            let errs = evaluate_items(&model, &out.best, &test_items, config.task.metric_field, config.task.eval_batch)?;
            Some(errs.iter().sum::<f64>() / errs.len() as f64)
        } else {
            None
        };
        rows.push(PatchAblationRow {
            patch_size: p,
            tokens,
            attn_bytes: attention_buffer_bytes(tokens, model.config().n_head, config.train.precision),
            encode_s: best,
            rel_l2,
        });
    }
    Ok(rows)
}
