use meshquery::backend::BackendError;
use meshquery::benchmarks::BenchmarkError;
use meshquery::geometry::GeometryError;
use meshquery::model::ModelError;
use meshquery::training::TrainError;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2.
    Config(String),
    /// Exit 3.
    Diverged(String),
    /// Exit 4.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Diverged(m) => write!(f, "numeric divergence: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::NonFinite(_) => CliError::Diverged(e.to_string()),
            BackendError::Checkpoint(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Backend(b) => b.into(),
            ModelError::Geometry(g) => g.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<BenchmarkError> for CliError {
    fn from(e: BenchmarkError) -> Self {
        match e {
            BenchmarkError::Io(_) => CliError::Io(e.to_string()),
            BenchmarkError::Backend(b) => b.into(),
            BenchmarkError::Geometry(g) => g.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Model(m) => m.into(),
            TrainError::Backend(b) => b.into(),
            TrainError::Benchmark(b) => b.into(),
            TrainError::NonFiniteGradient(_) | TrainError::Diverged { .. } => CliError::Diverged(e.to_string()),
            TrainError::Io(_) => CliError::Io(e.to_string()),
            TrainError::Invalid(_) => CliError::Config(e.to_string()),
        }
    }
}
