//! Losses, metric, Adam and the epoch loop.

mod ablation;
mod adam;
mod loss;
mod tasks;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{gce_ablation, patch_ablation, GceAblationConfig, GceAblationRow, PatchAblationConfig, PatchAblationRow};
pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use loss::{
    check_stencil, column, fd_laplacian_fn, heatsink_loss, heatsink_queries, laplacian_from_stencil, mse_data_loss, poisson_loss,
    relative_l2, relative_l2_item, stencil_points, weighted_sse, LossTerm,
};
pub use tasks::{
    evaluate_items, field_weights, HeatsinkTask, HeatsinkTaskConfig, PoissonTask, PoissonTaskConfig, SupervisedItem, SupervisedTask,
    SupervisedTaskConfig,
};

use crate::backend::{BackendError, Gradients, ParamStore, Precision, Tape, Tensor, Var};
use crate::benchmarks::BenchmarkError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error("non-finite gradient for `{0}`")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}, step {step}: {reason}")]
    Diverged { epoch: usize, step: usize, reason: String, last_good: Box<ParamStore> },
    #[error("{0}")]
    Invalid(String),
    #[error("training log: {0}")]
    Io(String),
}

impl TrainError {
    /// Non-finite values anywhere in a step.
    fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteGradient(_)
                | TrainError::Backend(BackendError::NonFinite(_))
                | TrainError::Model(ModelError::Backend(BackendError::NonFinite(_)))
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    /// Instances per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Multipliers per loss term name; missing terms weigh 1.
    pub loss_weights: BTreeMap<String, f64>,
    /// 32 or 64.
    pub precision: u32,
    /// Stop after the first epoch that ends past this many seconds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_limit_s: Option<f64>,
    /// Stop after the first epoch whose validation error reaches this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_val: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::darcy()
    }
}

impl TrainConfig {
    fn row(lr: f64, epochs: usize, batch_size: usize, weight_decay: f64) -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            lr,
            epochs,
            batch_size,
            seed: 0,
            weight_decay,
            loss_weights: BTreeMap::new(),
            precision: 64,
            time_limit_s: None,
            target_val: None,
        }
    }

    // L-BFGS rows use Adam at 1e-3; AdamW rows keep their rate with decay 1e-4.
    pub fn poisson() -> Self {
        Self::row(1e-3, 50, 1, 0.0)
    }

    pub fn darcy() -> Self {
        Self::row(1e-3, 200, 2, 1e-4)
    }

    pub fn shapenet() -> Self {
        Self::row(1e-3, 200, 2, 1e-4)
    }

    pub fn heat2d() -> Self {
        Self::row(1e-3, 100, 50, 0.0)
    }

    pub fn beam2d() -> Self {
        Self::row(1e-3, 100, 30, 0.0)
    }

    pub fn heatsink2d() -> Self {
        Self::row(1e-3, 100, 30, 0.0)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "poisson" => Some(Self::poisson()),
            "darcy" => Some(Self::darcy()),
            "shapenet" => Some(Self::shapenet()),
            "heat2d" => Some(Self::heat2d()),
            "beam2d" => Some(Self::beam2d()),
            "heatsink2d" => Some(Self::heatsink2d()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<Precision, TrainError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Invalid(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Invalid("batch_size must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(TrainError::Invalid("weight_decay must be non-negative".into()));
        }
        if let Some((name, w)) = self.loss_weights.iter().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return Err(TrainError::Invalid(format!("loss weight `{name}` = {w}")));
        }
        Precision::from_bits(self.precision).ok_or_else(|| TrainError::Invalid(format!("precision must be 32 or 64, got {}", self.precision)))
    }
}

/// A training problem: loss terms per step and a held-out metric.
pub trait Objective {
    fn steps_per_epoch(&self) -> usize;

    /// Independent items in a step; each gets its own tape and their
    /// gradients are summed.
    fn items_in_step(&self, _step: usize) -> usize {
        1
    }

    fn begin_epoch(&mut self, _epoch: usize, _rng: &mut ChaCha8Rng) -> Result<(), TrainError> {
        Ok(())
    }

    fn loss<'t>(
        &mut self,
        tape: &'t Tape,
        params: &ParamStore,
        step: usize,
        item: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<LossTerm<'t>>, TrainError>;

    /// Held-out relative L2, if the problem has labels.
    fn validate(&mut self, params: &ParamStore) -> Result<Option<f64>, TrainError>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Weighted sum of the terms, averaged over steps.
    pub total: f64,
    /// Unweighted terms in `LossReport::terms` order, averaged over steps.
    pub terms: Vec<f64>,
    pub val_rel_l2: Option<f64>,
    pub wall_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub terms: Vec<String>,
    pub history: Vec<EpochRecord>,
}

impl LossReport {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["epoch".to_string(), "total".into()];
        cols.extend(self.terms.iter().cloned());
        cols.extend(["val_rel_l2".to_string(), "wall_s".into()]);
        cols.join(",")
    }

    pub fn csv_row(&self, r: &EpochRecord) -> String {
        let mut cols = vec![r.epoch.to_string(), r.total.to_string()];
        cols.extend(r.terms.iter().map(f64::to_string));
        cols.push(r.val_rel_l2.map(|v| v.to_string()).unwrap_or_default());
        cols.push(format!("{:.3}", r.wall_s));
        cols.join(",")
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    /// Lowest validation error (lowest total without validation).
    pub best: ParamStore,
    pub best_epoch: Option<usize>,
    pub report: LossReport,
}

fn weighted_total<'t>(config: &TrainConfig, terms: &[LossTerm<'t>]) -> Result<Option<Var<'t>>, TrainError> {
    let mut total = None;
    for t in terms {
        let w = config.loss_weights.get(&t.name).copied().unwrap_or(t.weight);
        let v = t.value.scale(w)?;
        total = Some(match total {
            None => v,
            Some(acc) => v.add(&acc)?,
        });
    }
    Ok(total)
}

fn accumulate(acc: &mut BTreeMap<String, Tensor>, g: &Gradients) {
    for (name, t) in g.iter() {
        match acc.get_mut(name) {
            Some(a) => a.add_assign(t),
            None => {
                acc.insert(name.to_string(), t.clone());
            }
        }
    }
}

/// Runs `config.epochs` epochs of Adam on `objective`. Writes one CSV line
/// per epoch to `log` (header first). Non-finite values abort with the
/// parameters from before the failing step.
pub fn train(
    config: &TrainConfig,
    initial: ParamStore,
    objective: &mut dyn Objective,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainOutcome, TrainError> {
    let precision = config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = initial;
    let mut best = params.clone();
    let mut best_epoch = None;
    let mut best_score = f64::INFINITY;
    let mut state = AdamState::new();
    let mut report = LossReport::default();
    let start = Instant::now();

    for epoch in 0..config.epochs {
        objective.begin_epoch(epoch, &mut rng)?;
        let steps = objective.steps_per_epoch();
        let mut sums: Vec<f64> = vec![0.0; report.terms.len()];
        let mut total_sum = 0.0;
        for step in 0..steps {
            let diverged = |reason: String, params: &ParamStore| TrainError::Diverged {
                epoch,
                step,
                reason,
                last_good: Box::new(params.clone()),
            };
            let mut grads = BTreeMap::new();
            let mut step_terms: BTreeMap<String, f64> = BTreeMap::new();
            let mut step_total = 0.0;
            for item in 0..objective.items_in_step(step) {
                let tape = Tape::new().with_precision(precision);
                let terms = match objective.loss(&tape, &params, step, item, &mut rng) {
                    Ok(t) => t,
                    Err(e) if e.is_numeric() => return Err(diverged(e.to_string(), &params)),
                    Err(e) => return Err(e),
                };
                let Some(total) = (match weighted_total(config, &terms) {
                    Err(e) if e.is_numeric() => return Err(diverged(e.to_string(), &params)),
                    other => other?,
                }) else {
                    continue;
                };
                let tv = total.value().item()?;
                if !tv.is_finite() {
                    return Err(diverged(format!("loss {tv}"), &params));
                }
                step_total += tv;
                for t in &terms {
                    *step_terms.entry(t.name.clone()).or_insert(0.0) += t.value.value().item()?;
                }
                match tape.grad(&total, &params) {
                    Ok(g) if g.is_finite() => accumulate(&mut grads, &g),
                    Ok(_) => return Err(diverged("non-finite gradient".into(), &params)),
                    Err(BackendError::NonFinite(op)) => return Err(diverged(format!("non-finite {op}"), &params)),
                    Err(e) => return Err(e.into()),
                }
            }
            for name in step_terms.keys() {
                if !report.terms.contains(name) {
                    report.terms.push(name.clone());
                    sums.push(0.0);
                }
            }
            for (i, name) in report.terms.iter().enumerate() {
                sums[i] += step_terms.get(name).copied().unwrap_or(0.0);
            }
            total_sum += step_total;
            let g = Gradients::from_map(grads);
            match adam_step(&mut params, &g, &mut state, config.lr, config.weight_decay) {
                Err(e) if e.is_numeric() => return Err(diverged(e.to_string(), &params)),
                other => other?,
            }
            if precision == Precision::Single {
                for name in params.names().map(str::to_string).collect::<Vec<_>>() {
                    params.get_mut(&name)?.round_to_f32();
                }
            }
        }
        let n = steps.max(1) as f64;
        // the current parameters are what failed here, so fall back to the best so far
        let val = match objective.validate(&params) {
            Err(e) if e.is_numeric() => {
                return Err(TrainError::Diverged { epoch, step: steps, reason: format!("validation: {e}"), last_good: Box::new(best) })
            }
            Ok(Some(v)) if !v.is_finite() => {
                return Err(TrainError::Diverged { epoch, step: steps, reason: format!("validation {v}"), last_good: Box::new(best) })
            }
            other => other?,
        };
        let record = EpochRecord {
            epoch,
            total: total_sum / n,
            terms: sums.iter().map(|s| s / n).collect(),
            val_rel_l2: val,
            wall_s: start.elapsed().as_secs_f64(),
        };
        let score = val.unwrap_or(record.total);
        if score < best_score {
            best_score = score;
            best = params.clone();
            best_epoch = Some(epoch);
        }
        if let Some(w) = log.as_deref_mut() {
            let io = |e: std::io::Error| TrainError::Io(e.to_string());
            if epoch == 0 {
                writeln!(w, "{}", report.csv_header()).map_err(io)?;
            }
            writeln!(w, "{}", report.csv_row(&record)).map_err(io)?;
            w.flush().map_err(io)?;
        }
        report.history.push(record);
        if config.target_val.is_some_and(|t| val.is_some_and(|v| v <= t)) {
            break;
        }
        if config.time_limit_s.is_some_and(|limit| start.elapsed().as_secs_f64() > limit) {
            break;
        }
    }
    Ok(TrainOutcome { params, best, best_epoch, report })
}
