//! Analytic benchmarks and their dataset generators.

mod ambiguity;
mod beam;
mod dataset;
mod heatsink;
mod poisson;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ambiguity::{ambiguity_dataset, slab_temperature, AmbiguityInstance, AmbiguitySpec, TopBoundary};
pub use beam::{
    beam_dataset, beam_instance, beam_mesh, beam_mesh_nodes, beam_oracle, beam_schema, lame_constants, von_mises, BeamDatasetConfig,
    BeamFields, BeamSample, BeamSpec, BEAM_FIELDS, BEAM_MESH_COLUMNS, BEAM_MESH_ROWS,
};
pub use dataset::{read_dataset, read_labels_csv, write_dataset, write_labels_csv, Dataset, DatasetManifest, InstanceEntry};
pub use heatsink::{
    heatsink_instance, heatsink_schema, t_bottom, BoundarySample, BoundaryTag, HeatsinkGeometry, HeatsinkInstance, HeatsinkSpec,
};
pub use poisson::{poisson_grids, poisson_instance, poisson_mesh, poisson_oracle, poisson_schema, POISSON_TEST_N, POISSON_TRAIN_N};

use crate::backend::{BackendError, Tensor};
use crate::conditions::ConditionError;
use crate::geometry::{Domain, GeometryError, Mesh};

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("point ({0}, {1}) outside the benchmark domain")]
    OutsideDomain(f64, f64),
    #[error("invalid benchmark parameters: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("dataset I/O: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Labels evaluated from a closed-form solution.
    Analytic,
    /// No labels; physics-only.
    Unlabeled,
    /// Labels read from an external file.
    External,
}

/// One problem: input mesh, query points and (optionally) labels at the queries.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkInstance {
    pub mesh: Mesh,
    pub queries: Vec<[f64; 2]>,
    /// `[queries, fields]`
    pub labels: Option<Tensor>,
    pub fields: Vec<String>,
    pub params: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

/// Inclusive `nx × ny` grid over `[min, max]`, x varying fastest.
pub fn regular_grid(nx: usize, ny: usize, min: [f64; 2], max: [f64; 2]) -> Vec<[f64; 2]> {
    let lin = |n: usize, a: f64, b: f64, i: usize| if n == 1 { 0.5 * (a + b) } else if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            out.push([lin(nx, min[0], max[0], i), lin(ny, min[1], max[1], j)]);
        }
    }
    out
}

/// Uniform samples from the rectangle `[min, max]`.
pub fn uniform_points<R: Rng>(rng: &mut R, n: usize, min: [f64; 2], max: [f64; 2]) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.gen_range(min[0]..=max[0]), rng.gen_range(min[1]..=max[1])]).collect()
}

/// Rejection samples from `domain` inside its bounding rectangle.
pub fn sample_domain<R: Rng, D: Domain + ?Sized>(rng: &mut R, domain: &D, n: usize, min: [f64; 2], max: [f64; 2]) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = [rng.gen_range(min[0]..=max[0]), rng.gen_range(min[1]..=max[1])];
        if domain.contains(p) {
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        let g = regular_grid(3, 2, [0.0, -1.0], [1.0, 1.0]);
        assert_eq!(g, vec![[0.0, -1.0], [0.5, -1.0], [1.0, -1.0], [0.0, 1.0], [0.5, 1.0], [1.0, 1.0]]);
    }
}
