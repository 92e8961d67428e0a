use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{check_stencil, column, heatsink_loss, heatsink_queries, poisson_loss, relative_l2_item, weighted_sse, LossTerm};
use super::{Objective, TrainError};
use crate::backend::{ParamStore, Tape, Tensor};
use crate::benchmarks::{
    heatsink_instance, poisson_grids, poisson_instance, sample_domain, BenchmarkInstance, HeatsinkInstance, HeatsinkSpec,
};
use crate::geometry::{BoundingBox, Domain, Mesh};
use crate::model::Model;

/// Stencil step as a fraction of the largest bbox extent.
pub const STENCIL_REL: f64 = 1e-3;

fn stencil_step(bbox: &BoundingBox, rel: f64) -> f64 {
    rel * bbox.extent(0).max(bbox.extent(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoissonTaskConfig {
    pub colloc_points: usize,
    pub data_points: usize,
    pub steps_per_epoch: usize,
    pub stencil_rel: f64,
    pub eval_batch: usize,
}

impl Default for PoissonTaskConfig {
    fn default() -> Self {
        Self { colloc_points: 200, data_points: 200, steps_per_epoch: 50, stencil_rel: STENCIL_REL, eval_batch: 2500 }
    }
}

/// PDE residual plus data loss on the unit square; validation on the
/// 100×100 test grid.
pub struct PoissonTask {
    model: Model,
    config: PoissonTaskConfig,
    train: BenchmarkInstance,
    test: BenchmarkInstance,
}

impl PoissonTask {
    pub fn new(model: Model, config: PoissonTaskConfig) -> Result<Self, TrainError> {
        if config.colloc_points + config.data_points == 0 || config.steps_per_epoch == 0 {
            return Err(TrainError::Invalid("poisson task needs points and steps".into()));
        }
        let (train, test) = poisson_grids();
        Ok(Self { model, config, train: poisson_instance(train)?, test: poisson_instance(test)? })
    }

    pub fn test_instance(&self) -> &BenchmarkInstance {
        &self.test
    }

    pub fn evaluate(&self, params: &ParamStore) -> Result<f64, TrainError> {
        let pred = self.model.predict(params, &self.test.mesh, &self.test.queries, self.config.eval_batch)?;
        relative_l2_item(pred.data(), self.test.labels.as_ref().expect("analytic labels").data())
    }
}

impl Objective for PoissonTask {
    fn steps_per_epoch(&self) -> usize {
        self.config.steps_per_epoch
    }

    fn loss<'t>(&mut self, tape: &'t Tape, params: &ParamStore, _: usize, _: usize, rng: &mut ChaCha8Rng) -> Result<Vec<LossTerm<'t>>, TrainError> {
        let bbox = *self.train.mesh.bbox();
        let h = stencil_step(&bbox, self.config.stencil_rel);
        let (lo, hi) = (h, 1.0 - h);
        let colloc: Vec<[f64; 2]> = (0..self.config.colloc_points).map(|_| [rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)]).collect();
        check_stencil(&colloc, h, &bbox)?;
        let n = self.train.queries.len();
        let picks = rand::seq::index::sample(rng, n, self.config.data_points.min(n)).into_vec();
        let labels = self.train.labels.as_ref().expect("analytic labels");
        let data: Vec<[f64; 2]> = picks.iter().map(|&i| self.train.queries[i]).collect();
        let truth = Tensor::matrix(picks.len(), 1, picks.iter().map(|&i| labels.data()[i]).collect())?;

        let mut queries = super::loss::stencil_points(&colloc, h);
        let split = queries.len();
        queries.extend_from_slice(&data);
        let encoded = self.model.encode(tape, params, &self.train.mesh)?;
        let u = self.model.decode(tape, params, &encoded, &queries, None)?;
        poisson_loss(&u.slice_rows(0, split)?, &colloc, h, &u.slice_rows(split, queries.len())?, &truth)
    }

    fn validate(&mut self, params: &ParamStore) -> Result<Option<f64>, TrainError> {
        self.evaluate(params).map(Some)
    }
}

/// Mesh, query points and labels for supervised training.
#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedItem {
    pub mesh: Mesh,
    pub queries: Vec<[f64; 2]>,
    pub labels: Tensor,
}

impl TryFrom<&BenchmarkInstance> for SupervisedItem {
    type Error = TrainError;

    fn try_from(inst: &BenchmarkInstance) -> Result<Self, TrainError> {
        let labels = inst.labels.clone().ok_or_else(|| TrainError::Invalid("instance has no labels".into()))?;
        Ok(Self { mesh: inst.mesh.clone(), queries: inst.queries.clone(), labels })
    }
}

/// `1 / mean(label²)` per field over all items; 1 for all-zero fields.
pub fn field_weights(items: &[SupervisedItem]) -> Vec<f64> {
    let cols = items.first().map_or(0, |i| i.labels.cols());
    let mut sums = vec![0.0; cols];
    let mut count = 0usize;
    for it in items {
        for r in 0..it.labels.rows() {
            for (c, v) in it.labels.row(r).iter().enumerate() {
                sums[c] += v * v;
            }
        }
        count += it.labels.rows();
    }
    sums.iter().map(|s| if *s > 1e-24 * count as f64 { count as f64 / s } else { 1.0 }).collect()
}

/// Relative L2 of each item, on one field or on all fields together.
pub fn evaluate_items(model: &Model, params: &ParamStore, items: &[SupervisedItem], field: Option<usize>, batch: usize) -> Result<Vec<f64>, TrainError> {
    items
        .iter()
        .map(|it| {
            let pred = model.predict(params, &it.mesh, &it.queries, batch)?;
            match field {
                Some(c) => relative_l2_item(&column(&pred, c), &column(&it.labels, c)),
                None => relative_l2_item(pred.data(), it.labels.data()),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupervisedTaskConfig {
    /// Random subset of each item's points per step; all points when absent.
    pub points_per_item: Option<usize>,
    /// Validation field index; all fields together when absent.
    pub metric_field: Option<usize>,
    pub eval_batch: usize,
}

impl Default for SupervisedTaskConfig {
    fn default() -> Self {
        Self { points_per_item: None, metric_field: None, eval_batch: 2500 }
    }
}

/// Field-scaled squared error against labels.
pub struct SupervisedTask {
    model: Model,
    config: SupervisedTaskConfig,
    batch_size: usize,
    train: Vec<SupervisedItem>,
    val: Vec<SupervisedItem>,
    weights: Vec<f64>,
    order: Vec<usize>,
}

impl SupervisedTask {
    /// `batch_size` instances per optimizer step.
    pub fn new(
        model: Model,
        train: Vec<SupervisedItem>,
        val: Vec<SupervisedItem>,
        batch_size: usize,
        config: SupervisedTaskConfig,
    ) -> Result<Self, TrainError> {
        if train.is_empty() || batch_size == 0 {
            return Err(TrainError::Invalid("supervised task needs items and a positive batch size".into()));
        }
        let out = model.config().out_dim;
        if let Some(it) = train.iter().chain(&val).find(|it| it.labels.shape() != [it.queries.len(), out]) {
            return Err(TrainError::Invalid(format!("labels {:?} for {} queries and {out} outputs", it.labels.shape(), it.queries.len())));
        }
        if config.metric_field.is_some_and(|c| c >= out) {
            return Err(TrainError::Invalid("metric field out of range".into()));
        }
        let weights = field_weights(&train);
        let order = (0..train.len()).collect();
        Ok(Self { model, config, batch_size, train, val, weights, order })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Objective for SupervisedTask {
    fn steps_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.batch_size)
    }

    fn items_in_step(&self, step: usize) -> usize {
        (self.train.len() - step * self.batch_size).min(self.batch_size)
    }

    fn begin_epoch(&mut self, _: usize, rng: &mut ChaCha8Rng) -> Result<(), TrainError> {
        self.order.shuffle(rng);
        Ok(())
    }

    fn loss<'t>(&mut self, tape: &'t Tape, params: &ParamStore, step: usize, item: usize, rng: &mut ChaCha8Rng) -> Result<Vec<LossTerm<'t>>, TrainError> {
        let it = &self.train[self.order[step * self.batch_size + item]];
        let (queries, labels) = match self.config.points_per_item {
            Some(k) if k < it.queries.len() => {
                let picks = rand::seq::index::sample(rng, it.queries.len(), k).into_vec();
                let cols = it.labels.cols();
                let q = picks.iter().map(|&i| it.queries[i]).collect::<Vec<_>>();
                let l = picks.iter().flat_map(|&i| it.labels.row(i).to_vec()).collect();
                (q, Tensor::matrix(k, cols, l)?)
            }
            _ => (it.queries.clone(), it.labels.clone()),
        };
        let pred = self.model.forward(tape, params, &it.mesh, &queries)?;
        Ok(vec![LossTerm::new("data", weighted_sse(&pred, &labels, &self.weights)?)])
    }

    fn validate(&mut self, params: &ParamStore) -> Result<Option<f64>, TrainError> {
        if self.val.is_empty() {
            return Ok(None);
        }
        let errs = evaluate_items(&self.model, params, &self.val, self.config.metric_field, self.config.eval_batch)?;
        Ok(Some(errs.iter().sum::<f64>() / errs.len() as f64))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatsinkTaskConfig {
    pub colloc_points: usize,
    pub steps_per_epoch: usize,
    pub stencil_rel: f64,
    pub eval_batch: usize,
}

impl Default for HeatsinkTaskConfig {
    fn default() -> Self {
        Self { colloc_points: 200, steps_per_epoch: 1, stencil_rel: STENCIL_REL, eval_batch: 2500 }
    }
}

/// Physics-only heat-sink training with fresh `(H, a)` every epoch.
pub struct HeatsinkTask {
    model: Model,
    spec: HeatsinkSpec,
    config: HeatsinkTaskConfig,
    instances_per_epoch: usize,
    current: Vec<HeatsinkInstance>,
    val: Vec<SupervisedItem>,
}

impl HeatsinkTask {
    /// Draws `instances_per_epoch` geometries each epoch. `val` holds
    /// externally labelled instances, if any.
    pub fn new(
        model: Model,
        spec: HeatsinkSpec,
        instances_per_epoch: usize,
        config: HeatsinkTaskConfig,
        val: Vec<SupervisedItem>,
    ) -> Result<Self, TrainError> {
        if instances_per_epoch == 0 || config.steps_per_epoch == 0 {
            return Err(TrainError::Invalid("heatsink task needs instances and steps".into()));
        }
        Ok(Self { model, spec, config, instances_per_epoch, current: Vec::new(), val })
    }

    fn collocation(&self, inst: &HeatsinkInstance, h: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
        let g = &inst.geometry;
        let bb = g.bbox();
        let mut out = Vec::with_capacity(self.config.colloc_points);
        while out.len() < self.config.colloc_points {
            let p = sample_domain(rng, g, 1, bb.min, bb.max)[0];
            if super::loss::stencil_points(&[p], h).iter().all(|q| g.contains(*q)) {
                out.push(p);
            }
        }
        out
    }
}

impl Objective for HeatsinkTask {
    fn steps_per_epoch(&self) -> usize {
        self.config.steps_per_epoch
    }

    fn items_in_step(&self, _: usize) -> usize {
        self.current.len()
    }

    fn begin_epoch(&mut self, _: usize, rng: &mut ChaCha8Rng) -> Result<(), TrainError> {
        self.current = (0..self.instances_per_epoch)
            .map(|_| {
                let (h, a) = self.spec.sample_params(rng);
                heatsink_instance(&self.spec, h, a)
            })
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    fn loss<'t>(&mut self, tape: &'t Tape, params: &ParamStore, _: usize, item: usize, rng: &mut ChaCha8Rng) -> Result<Vec<LossTerm<'t>>, TrainError> {
        let inst = &self.current[item];
        let h = stencil_step(&inst.geometry.bbox(), self.config.stencil_rel);
        let colloc = self.collocation(inst, h, rng);
        check_stencil(&colloc, h, &inst.geometry)?;
        let queries = heatsink_queries(inst, &colloc, h);
        let t = self.model.forward(tape, params, &inst.instance.mesh, &queries)?;
        heatsink_loss(&t, inst, &colloc, h)
    }

    fn validate(&mut self, params: &ParamStore) -> Result<Option<f64>, TrainError> {
        if self.val.is_empty() {
            return Ok(None);
        }
        let errs = evaluate_items(&self.model, params, &self.val, None, self.config.eval_batch)?;
        Ok(Some(errs.iter().sum::<f64>() / errs.len() as f64))
    }
}
