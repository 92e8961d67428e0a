//! Boundary-type ambiguity set: a fin-free slab `[0, W] × [0, H]` with the
//! heat-sink bottom profile and adiabatic sides. Half the instances hold the
//! top face at `T = 0`, the other half make it adiabatic. The top-face
//! records are zero-valued in both halves and differ only in which group is
//! present.
//!
//! Labels come from the cosine series of the bottom profile,
//! `T_bottom(x) = c₀ + Σ c_k cos(kπx/W)`, with `c₀ = a(W²/12 + 6.25)` and
//! `c_k = 4W²a/(kπ)²` for even `k` (zero for odd `k`, `W = 5`):
//! Dirichlet top: `T = c₀(1 − y/H) + Σ c_k cos(kπx/W) sinh(kπ(H−y)/W) / sinh(kπH/W)`,
//! adiabatic top: `T = c₀ + Σ c_k cos(kπx/W) cosh(kπ(H−y)/W) / cosh(kπH/W)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::heatsink::{heatsink_schema, t_bottom};
use super::{regular_grid, uniform_points, BenchmarkError, BenchmarkInstance, Provenance};
use crate::backend::Tensor;
use crate::conditions::{ConditionRecord, DIRICHLET, NEUMANN};
use crate::geometry::{BoundingBox, Mesh};

const WIDTH: f64 = 5.0;
const MAX_TERMS: usize = 4000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopBoundary {
    Dirichlet,
    Neumann,
}

impl TopBoundary {
    pub fn suffix(self) -> &'static str {
        match self {
            TopBoundary::Dirichlet => "D",
            TopBoundary::Neumann => "N",
        }
    }
}

/// Steady temperature in the slab of height `h` with bottom coefficient `a`.
pub fn slab_temperature(x: f64, y: f64, h: f64, a: f64, top: TopBoundary) -> Result<f64, BenchmarkError> {
    if !(0.0..=WIDTH).contains(&x) || !(0.0..=h).contains(&y) {
        return Err(BenchmarkError::OutsideDomain(x, y));
    }
    let c0 = a * (WIDTH * WIDTH / 12.0 + 6.25);
    let mut t = match top {
        TopBoundary::Dirichlet => c0 * (1.0 - y / h),
        TopBoundary::Neumann => c0,
    };
    let sign = match top {
        TopBoundary::Dirichlet => -1.0,
        TopBoundary::Neumann => 1.0,
    };
    for k in (2..=MAX_TERMS).step_by(2) {
        let kk = k as f64 * PI / WIDTH;
        let ck = 4.0 * WIDTH * WIDTH * a / (k as f64 * PI).powi(2);
        // sinh / cosh ratios written with decaying exponentials only
        let decay = (-kk * y).exp();
        if decay < 1e-300 {
            break;
        }
        let ratio = decay * (1.0 + sign * (-2.0 * kk * (h - y)).exp()) / (1.0 + sign * (-2.0 * kk * h).exp());
        t += ck * (kk * x).cos() * ratio;
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmbiguitySpec {
    /// Number of `(H, a)` pairs; each yields one instance per top type.
    pub pairs: usize,
    pub height_range: [f64; 2],
    pub a_range: [f64; 2],
    pub nodes_x: usize,
    pub nodes_y: usize,
    pub train_points: usize,
    pub test_points: usize,
}

impl Default for AmbiguitySpec {
    fn default() -> Self {
        Self { pairs: 5, height_range: [1.0, 2.0], a_range: [0.5, 1.5], nodes_x: 26, nodes_y: 9, train_points: 400, test_points: 400 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AmbiguityInstance {
    pub top: TopBoundary,
    /// Labeled training points.
    pub train: BenchmarkInstance,
    /// Held-out points on the same mesh.
    pub test: BenchmarkInstance,
}

fn slab_mesh(spec: &AmbiguitySpec, h: f64, a: f64, top: TopBoundary) -> Result<Mesh, BenchmarkError> {
    let schema = heatsink_schema();
    let nodes = regular_grid(spec.nodes_x, spec.nodes_y, [0.0, 0.0], [WIDTH, h]);
    let mut records = Vec::with_capacity(nodes.len());
    for &[x, y] in &nodes {
        let r = ConditionRecord::empty(&schema);
        let r = if y == 0.0 {
            r.with(&schema, DIRICHLET, vec![t_bottom(x, a)])?
        } else if y == h {
            match top {
                TopBoundary::Dirichlet => r.with(&schema, DIRICHLET, vec![0.0])?,
                // zero flux with the normal masked out
                TopBoundary::Neumann => r.with(&schema, NEUMANN, vec![0.0; 4])?,
            }
        } else if x == 0.0 {
            r.with(&schema, NEUMANN, vec![-1.0, 0.0, 0.0, 0.0])?
        } else if x == WIDTH {
            r.with(&schema, NEUMANN, vec![1.0, 0.0, 0.0, 0.0])?
        } else {
            r
        };
        records.push(r);
    }
    Ok(Mesh::new(nodes, records, schema, Some(BoundingBox::new([0.0, 0.0], [WIDTH, h])?))?)
}

fn labeled(mesh: &Mesh, queries: Vec<[f64; 2]>, h: f64, a: f64, top: TopBoundary) -> Result<BenchmarkInstance, BenchmarkError> {
    let labels = queries.iter().map(|p| slab_temperature(p[0], p[1], h, a, top)).collect::<Result<Vec<_>, _>>()?;
    Ok(BenchmarkInstance {
        mesh: mesh.clone(),
        labels: Some(Tensor::matrix(queries.len(), 1, labels)?),
        queries,
        fields: vec!["T".into()],
        params: BTreeMap::from([("H".to_string(), h), ("a".to_string(), a)]),
        provenance: Provenance::Analytic,
    })
}

/// `pairs` Dirichlet-top instances followed by `pairs` adiabatic-top
/// instances with the same `(H, a)` sequence.
pub fn ambiguity_dataset(spec: &AmbiguitySpec, seed: u64) -> Result<Vec<AmbiguityInstance>, BenchmarkError> {
    if spec.nodes_x < 2 || spec.nodes_y < 2 {
        return Err(BenchmarkError::Invalid("slab mesh needs at least 2×2 nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let pairs: Vec<(f64, f64)> = (0..spec.pairs)
        .map(|_| {
            let h = pick(&mut rng, spec.height_range);
            (h, pick(&mut rng, spec.a_range))
        })
        .collect();
    let mut out = Vec::with_capacity(2 * spec.pairs);
    for top in [TopBoundary::Dirichlet, TopBoundary::Neumann] {
        for &(h, a) in &pairs {
            let mesh = slab_mesh(spec, h, a, top)?;
            let train_q = uniform_points(&mut rng, spec.train_points, [0.0, 0.0], [WIDTH, h]);
            let test_q = uniform_points(&mut rng, spec.test_points, [0.0, 0.0], [WIDTH, h]);
            out.push(AmbiguityInstance {
                top,
                train: labeled(&mesh, train_q, h, a, top)?,
                test: labeled(&mesh, test_q, h, a, top)?,
            });
        }
    }
    Ok(out)
}
