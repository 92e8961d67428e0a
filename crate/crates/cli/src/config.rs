//! Run configuration: one JSON file per experiment. Sections left out take
//! the benchmark's preset.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use meshquery::benchmarks::{AmbiguitySpec, BeamDatasetConfig, BeamSpec, HeatsinkSpec};
use meshquery::model::ModelConfig;
use meshquery::training::{
    GceAblationConfig, HeatsinkTaskConfig, PatchAblationConfig, PoissonTaskConfig, SupervisedTaskConfig, TrainConfig,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Poisson,
    Beam2d,
    Heatsink2d,
    Ambiguity,
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Poisson => "poisson",
            Benchmark::Beam2d => "beam2d",
            Benchmark::Heatsink2d => "heatsink2d",
            Benchmark::Ambiguity => "ambiguity",
        }
    }

    pub fn model_preset(self) -> ModelConfig {
        match self {
            Benchmark::Poisson => ModelConfig::poisson(),
            Benchmark::Beam2d => ModelConfig::beam2d(),
            Benchmark::Heatsink2d => ModelConfig::heatsink2d(),
            Benchmark::Ambiguity => GceAblationConfig::default().model,
        }
    }

    pub fn train_preset(self) -> TrainConfig {
        match self {
            Benchmark::Poisson => TrainConfig::poisson(),
            Benchmark::Beam2d => TrainConfig::beam2d(),
            Benchmark::Heatsink2d => TrainConfig::heatsink2d(),
            Benchmark::Ambiguity => GceAblationConfig::default().train,
        }
    }

    fn supervised_preset(self) -> SupervisedTaskConfig {
        match self {
            Benchmark::Beam2d => SupervisedTaskConfig { metric_field: Some(0), ..Default::default() },
            _ => SupervisedTaskConfig::default(),
        }
    }
}

/// Resolved configuration; serializes with every section filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub benchmark: Benchmark,
    pub seed: u64,
    /// Dataset directory written by `gen`; generated in memory when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub poisson: PoissonTaskConfig,
    pub supervised: SupervisedTaskConfig,
    pub heatsink: HeatsinkTaskConfig,
    pub beam: BeamSpec,
    pub beam_data: BeamDatasetConfig,
    pub heatsink_spec: HeatsinkSpec,
    pub ambiguity: AmbiguitySpec,
    pub gce_ablation: GceAblationConfig,
    pub patch_ablation: PatchAblationConfig,
}

/// On-disk form with optional sections.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    benchmark: Benchmark,
    #[serde(default)]
    seed: u64,
    dataset: Option<PathBuf>,
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
    poisson: Option<PoissonTaskConfig>,
    supervised: Option<SupervisedTaskConfig>,
    heatsink: Option<HeatsinkTaskConfig>,
    beam: Option<BeamSpec>,
    beam_data: Option<BeamDatasetConfig>,
    heatsink_spec: Option<HeatsinkSpec>,
    ambiguity: Option<AmbiguitySpec>,
    gce_ablation: Option<GceAblationConfig>,
    patch_ablation: Option<PatchAblationConfig>,
}

impl RunConfig {
    pub fn preset(benchmark: Benchmark) -> Self {
        Self {
            version: CONFIG_VERSION,
            benchmark,
            seed: 0,
            dataset: None,
            model: benchmark.model_preset(),
            train: benchmark.train_preset(),
            poisson: PoissonTaskConfig::default(),
            supervised: benchmark.supervised_preset(),
            heatsink: HeatsinkTaskConfig::default(),
            beam: BeamSpec::default(),
            beam_data: BeamDatasetConfig::default(),
            heatsink_spec: HeatsinkSpec::default(),
            ambiguity: AmbiguitySpec::default(),
            gce_ablation: GceAblationConfig::default(),
            patch_ablation: PatchAblationConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        if raw.version != CONFIG_VERSION {
            return Err(CliError::Config(format!("config version {} is not supported (expected {CONFIG_VERSION})", raw.version)));
        }
        let p = Self::preset(raw.benchmark);
        let cfg = Self {
            version: raw.version,
            benchmark: raw.benchmark,
            seed: raw.seed,
            dataset: raw.dataset,
            model: raw.model.unwrap_or(p.model),
            train: raw.train.unwrap_or(p.train),
            poisson: raw.poisson.unwrap_or(p.poisson),
            supervised: raw.supervised.unwrap_or(p.supervised),
            heatsink: raw.heatsink.unwrap_or(p.heatsink),
            beam: raw.beam.unwrap_or(p.beam),
            beam_data: raw.beam_data.unwrap_or(p.beam_data),
            heatsink_spec: raw.heatsink_spec.unwrap_or(p.heatsink_spec),
            ambiguity: raw.ambiguity.unwrap_or(p.ambiguity),
            gce_ablation: raw.gce_ablation.unwrap_or(p.gce_ablation),
            patch_ablation: raw.patch_ablation.unwrap_or(p.patch_ablation),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Applies `--seed` and `--precision`.
    pub fn apply_flags(&mut self, seed: Option<u64>, precision: Option<u32>) -> Result<(), CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(p) = precision {
            self.train.precision = p;
            self.gce_ablation.train.precision = p;
            self.patch_ablation.train.precision = p;
        }
        self.train.seed = self.seed;
        self.validate()
    }
}
