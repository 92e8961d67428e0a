//! `-∇²u = f` on the unit square with `u = 0` on the boundary and
//! `u = sin(πx) sin(πy)`, so `f = 2π² sin(πx) sin(πy)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use super::{regular_grid, BenchmarkError, BenchmarkInstance, Provenance};
use crate::backend::Tensor;
use crate::conditions::{ConditionRecord, ConditionSchema, DIRICHLET};
use crate::geometry::{BoundingBox, Mesh};

pub const POISSON_TRAIN_N: usize = 50;
pub const POISSON_TEST_N: usize = 100;
const SOURCE: &str = "source";

/// `(u_true, f)` at `(x, y)`.
pub fn poisson_oracle(x: f64, y: f64) -> Result<(f64, f64), BenchmarkError> {
    if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
        return Err(BenchmarkError::OutsideDomain(x, y));
    }
    let s = (PI * x).sin() * (PI * y).sin();
    Ok((s, 2.0 * PI * PI * s))
}

/// Train (50×50) and test (100×100) grids over the closed unit square.
pub fn poisson_grids() -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    (
        regular_grid(POISSON_TRAIN_N, POISSON_TRAIN_N, [0.0, 0.0], [1.0, 1.0]),
        regular_grid(POISSON_TEST_N, POISSON_TEST_N, [0.0, 0.0], [1.0, 1.0]),
    )
}

/// Source term at every node, zero Dirichlet value on boundary nodes.
pub fn poisson_schema() -> ConditionSchema {
    ConditionSchema::from_pairs(&[(DIRICHLET, 1), (SOURCE, 1)]).expect("static schema")
}

pub fn poisson_mesh(nodes: Vec<[f64; 2]>) -> Result<Mesh, BenchmarkError> {
    let schema = poisson_schema();
    let mut records = Vec::with_capacity(nodes.len());
    for &[x, y] in &nodes {
        let (_, f) = poisson_oracle(x, y)?;
        let mut r = ConditionRecord::empty(&schema).with(&schema, SOURCE, vec![f])?;
        if x == 0.0 || x == 1.0 || y == 0.0 || y == 1.0 {
            r.set(&schema, DIRICHLET, vec![0.0])?;
        }
        records.push(r);
    }
    let bbox = BoundingBox::new([0.0, 0.0], [1.0, 1.0])?;
    Ok(Mesh::new(nodes, records, schema, Some(bbox))?)
}

/// The mesh is always the training grid; `queries` selects where labels are given.
pub fn poisson_instance(queries: Vec<[f64; 2]>) -> Result<BenchmarkInstance, BenchmarkError> {
    let (train, _) = poisson_grids();
    let mesh = poisson_mesh(train)?;
    let labels = queries.iter().map(|p| poisson_oracle(p[0], p[1]).map(|(u, _)| u)).collect::<Result<Vec<_>, _>>()?;
    Ok(BenchmarkInstance {
        mesh,
        labels: Some(Tensor::matrix(queries.len(), 1, labels)?),
        queries,
        fields: vec!["u".into()],
        params: BTreeMap::new(),
        provenance: Provenance::Analytic,
    })
}
