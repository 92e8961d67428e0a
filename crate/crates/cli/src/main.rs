mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Benchmark;

#[derive(Parser)]
#[command(name = "meshquery", version, about = "Train and query mesh-conditioned field surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the commands that resolve a run configuration.
#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Run configuration (JSON). Sections left out take the benchmark preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Arithmetic precision in bits: 32 or 64.
    #[arg(long)]
    pub precision: Option<u32>,
}

/// Where the input mesh comes from.
#[derive(Args, Clone, Debug)]
#[group(required = true, multiple = false)]
pub struct MeshSource {
    /// Mesh file, JSON or CSV by extension.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Dataset directory; pick the instance with `--instance`.
    #[arg(long, requires = "instance")]
    pub data: Option<PathBuf>,
}

/// Where the query points come from.
#[derive(Args, Clone, Debug)]
#[group(required = true, multiple = false)]
pub struct PointSource {
    /// Regular grid over the mesh bounding box, e.g. `100x40`.
    #[arg(long)]
    pub resolution: Option<String>,
    /// Uniform random points in the mesh bounding box.
    #[arg(long)]
    pub random: Option<usize>,
    /// CSV with columns `x,y`.
    #[arg(long)]
    pub points: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AblationKind {
    Gce,
    Patch,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark dataset directory.
    Gen {
        benchmark: Benchmark,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Unlabeled heat-sink geometries to draw.
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Train a model and write the best checkpoint, log and resolved config.
    Train {
        /// Benchmark preset when no config file is given.
        #[arg(long, required_unless_present = "config")]
        benchmark: Option<Benchmark>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Dataset directory from `gen`; overrides the config.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Relative L2 error of a checkpoint on a labelled dataset split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Per-point predictions and errors (CSV).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict fields at arbitrary points.
    Query {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        mesh: MeshSource,
        /// `split:index` within `--data`.
        #[arg(long)]
        instance: Option<String>,
        #[command(flatten)]
        points: PointSource,
        /// Seed for `--random`.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an embedding or patch-size ablation.
    Ablate {
        kind: AblationKind,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write decoder cross-attention weights (dot-product attention only).
    ExportAttn {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        mesh: MeshSource,
        #[arg(long)]
        instance: Option<String>,
        #[command(flatten)]
        points: PointSource,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { benchmark, out, common, count } => commands::gen(benchmark, &out, &common, count),
        Command::Train { benchmark, out, common, data, epochs } => commands::train(benchmark, &out, &common, data, epochs),
        Command::Eval { checkpoint, data, split, out } => commands::eval(&checkpoint, &data, &split, out.as_deref()),
        Command::Query { checkpoint, mesh, instance, points, seed, out } => {
            commands::query(&checkpoint, &mesh, instance.as_deref(), &points, seed, out.as_deref())
        }
        Command::Ablate { kind, out, common } => commands::ablate(kind, &out, &common),
        Command::ExportAttn { checkpoint, mesh, instance, points, seed, out } => {
            commands::export_attn(&checkpoint, &mesh, instance.as_deref(), &points, seed, &out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("meshquery: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
