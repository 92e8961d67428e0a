//! Cantilever beam under an end moment, `[0, L] × [-H/2, H/2]`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_points, BenchmarkError, BenchmarkInstance, Provenance};
use crate::backend::Tensor;
use crate::conditions::{ConditionRecord, ConditionSchema, DIRICHLET, NEUMANN};
use crate::geometry::{BoundingBox, Mesh};

pub const BEAM_FIELDS: [&str; 5] = ["u", "v", "sigma_x", "sigma_y", "tau_xy"];
pub const BEAM_MESH_COLUMNS: usize = 193;
pub const BEAM_MESH_ROWS: usize = 28;
const MESH_SEED: u64 = 5404;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamSpec {
    pub length: f64,
    pub height: f64,
    pub width: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub moment_range: [f64; 2],
}

impl Default for BeamSpec {
    fn default() -> Self {
        Self { length: 5.0, height: 1.0, width: 1.0, youngs_modulus: 20.0, poisson_ratio: 0.3, moment_range: [0.5, 1.5] }
    }
}

impl BeamSpec {
    pub fn validate(&self) -> Result<(), BenchmarkError> {
        if !(self.length > 0.0 && self.height > 0.0 && self.width > 0.0 && self.youngs_modulus > 0.0) {
            return Err(BenchmarkError::Invalid("beam dimensions and modulus must be positive".into()));
        }
        if !(self.poisson_ratio > 0.0 && self.poisson_ratio < 0.5) {
            return Err(BenchmarkError::Invalid("poisson ratio must lie in (0, 0.5)".into()));
        }
        if !(self.moment_range[0] <= self.moment_range[1]) {
            return Err(BenchmarkError::Invalid("empty moment range".into()));
        }
        Ok(())
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox { min: [0.0, -0.5 * self.height], max: [self.length, 0.5 * self.height] }
    }
}

/// `(μ, λ)` from Young's modulus and Poisson's ratio.
pub fn lame_constants(e: f64, nu: f64) -> Result<(f64, f64), BenchmarkError> {
    if (nu - 0.5).abs() < 1e-12 || (nu + 1.0).abs() < 1e-12 {
        return Err(BenchmarkError::Invalid(format!("singular Poisson ratio {nu}")));
    }
    Ok((e / (2.0 * (1.0 + nu)), e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))))
}

pub fn von_mises(sx: f64, sy: f64, txy: f64) -> f64 {
    (sx * sx + sy * sy - sx * sy + 3.0 * txy * txy).max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamFields {
    pub u: f64,
    pub v: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub tau_xy: f64,
    pub von_mises: f64,
}

impl BeamFields {
    /// Components in [`BEAM_FIELDS`] order.
    pub fn components(&self) -> [f64; 5] {
        [self.u, self.v, self.sigma_x, self.sigma_y, self.tau_xy]
    }
}

pub fn beam_oracle(x: f64, y: f64, spec: &BeamSpec, moment: f64) -> Result<BeamFields, BenchmarkError> {
    if !spec.bbox().contains([x, y]) {
        return Err(BenchmarkError::OutsideDomain(x, y));
    }
    let (mu, lambda) = lame_constants(spec.youngs_modulus, spec.poisson_ratio)?;
    let (l, h) = (spec.length, spec.height);
    let denom = mu * (mu + lambda) * l * h.powi(3);
    let u = 3.0 * moment * (2.0 * mu + lambda) / denom * x * y;
    let v = -3.0 * moment / (2.0 * denom) * ((2.0 * mu + lambda) * x * x + lambda * y * y);
    let sigma_x = 12.0 * moment / (spec.width * h.powi(3)) * y;
    Ok(BeamFields { u, v, sigma_x, sigma_y: 0.0, tau_xy: 0.0, von_mises: von_mises(sigma_x, 0.0, 0.0) })
}

/// Structured-looking quad mesh of `193 × 28 = 5404` nodes, refined toward
/// the clamped end and the top and bottom faces, with interior jitter.
pub fn beam_mesh_nodes(spec: &BeamSpec) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(MESH_SEED);
    let (nx, ny) = (BEAM_MESH_COLUMNS, BEAM_MESH_ROWS);
    let xs: Vec<f64> = (0..nx)
        .map(|i| {
            let t = i as f64 / (nx - 1) as f64;
            spec.length * (0.6 * t + 0.4 * t * t)
        })
        .collect();
    let ys: Vec<f64> = (0..ny)
        .map(|j| {
            let s = 2.0 * j as f64 / (ny - 1) as f64 - 1.0;
            0.5 * spec.height * (std::f64::consts::FRAC_PI_2 * s).sin()
        })
        .collect();
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (mut x, mut y) = (xs[i], ys[j]);
            if i > 0 && i + 1 < nx && j > 0 && j + 1 < ny {
                let hx = (xs[i] - xs[i - 1]).min(xs[i + 1] - xs[i]);
                let hy = (ys[j] - ys[j - 1]).min(ys[j + 1] - ys[j]);
                x += 0.2 * hx * rng.gen_range(-1.0..1.0);
                y += 0.2 * hy * rng.gen_range(-1.0..1.0);
            }
            nodes.push([x, y]);
        }
    }
    nodes
}

/// Clamped-end displacement `(u, v)` and end traction `[n_x, n_y, t_x, t_y]`.
pub fn beam_schema() -> ConditionSchema {
    ConditionSchema::from_pairs(&[(DIRICHLET, 2), (NEUMANN, 4)]).expect("static schema")
}

/// Mesh carrying the clamped-end displacements at `x = 0` and the traction
/// equivalent to the end moment at `x = L`.
pub fn beam_mesh(spec: &BeamSpec, nodes: &[[f64; 2]], moment: f64) -> Result<Mesh, BenchmarkError> {
    let schema = beam_schema();
    let mut records = Vec::with_capacity(nodes.len());
    for &[x, y] in nodes {
        let mut r = ConditionRecord::empty(&schema);
        if x == 0.0 {
            let f = beam_oracle(x, y, spec, moment)?;
            r.set(&schema, DIRICHLET, vec![f.u, f.v])?;
        } else if x == spec.length {
            let f = beam_oracle(x, y, spec, moment)?;
            r.set(&schema, NEUMANN, vec![1.0, 0.0, f.sigma_x, f.tau_xy])?;
        }
        records.push(r);
    }
    Ok(Mesh::new(nodes.to_vec(), records, schema, Some(spec.bbox()))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamDatasetConfig {
    pub train_instances: usize,
    pub train_points: usize,
    pub test_instances: usize,
    pub test_points: usize,
}

impl Default for BeamDatasetConfig {
    fn default() -> Self {
        Self { train_instances: 1000, train_points: 1000, test_instances: 100, test_points: 5000 }
    }
}

/// A sampled moment and its random query points.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamSample {
    pub moment: f64,
    pub queries: Vec<[f64; 2]>,
}

/// Train and test samples; a pure function of `(spec, config, seed)`.
pub fn beam_dataset(spec: &BeamSpec, config: &BeamDatasetConfig, seed: u64) -> Result<(Vec<BeamSample>, Vec<BeamSample>), BenchmarkError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bbox = spec.bbox();
    let [lo, hi] = spec.moment_range;
    let mut draw = |count: usize, points: usize| -> Vec<BeamSample> {
        (0..count)
            .map(|_| {
                let moment = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
                BeamSample { moment, queries: uniform_points(&mut rng, points, bbox.min, bbox.max) }
            })
            .collect()
    };
    let train = draw(config.train_instances, config.train_points);
    let test = draw(config.test_instances, config.test_points);
    Ok((train, test))
}

/// Materializes a sample on the given mesh nodes with analytic labels.
pub fn beam_instance(spec: &BeamSpec, nodes: &[[f64; 2]], moment: f64, queries: Vec<[f64; 2]>) -> Result<BenchmarkInstance, BenchmarkError> {
    let mesh = beam_mesh(spec, nodes, moment)?;
    let mut labels = Vec::with_capacity(queries.len() * 5);
    for p in &queries {
        labels.extend(beam_oracle(p[0], p[1], spec, moment)?.components());
    }
    Ok(BenchmarkInstance {
        mesh,
        labels: Some(Tensor::matrix(queries.len(), 5, labels)?),
        queries,
        fields: BEAM_FIELDS.iter().map(|s| s.to_string()).collect(),
        params: BTreeMap::from([("M".to_string(), moment)]),
        provenance: Provenance::Analytic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lame() {
        let (mu, lambda) = lame_constants(20.0, 0.3).unwrap();
        assert!((mu - 7.6923).abs() < 1e-4);
        assert!((lambda - 11.538).abs() < 1e-3);
        let (mu, lambda) = lame_constants(20.0, 0.0).unwrap();
        assert_eq!((mu, lambda), (10.0, 0.0));
        assert!(lame_constants(20.0, 0.5).is_err());
    }

    #[test]
    fn oracle_collapses() {
        let s = BeamSpec::default();
        for x in [0.0, 1.3, 5.0] {
            assert_eq!(beam_oracle(x, 0.0, &s, 1.0).unwrap().u, 0.0);
            let f = beam_oracle(x, 0.0, &s, 1.0).unwrap();
            assert_eq!(f.sigma_x, 0.0);
        }
        let f = beam_oracle(2.0, 0.5, &s, 1.0).unwrap();
        assert!((f.sigma_x - 6.0).abs() < 1e-14);
        assert_eq!(f.von_mises, f.sigma_x.abs());
        assert!(beam_oracle(2.0, 0.6, &s, 1.0).is_err());
    }

    #[test]
    fn mesh_has_5404_nodes_in_domain() {
        let s = BeamSpec::default();
        let nodes = beam_mesh_nodes(&s);
        assert_eq!(nodes.len(), 5404);
        assert!(nodes.iter().all(|&p| s.bbox().contains(p)));
        assert_eq!(nodes, beam_mesh_nodes(&s));
        let m = beam_mesh(&s, &nodes, 1.0).unwrap();
        let sch = m.schema();
        let clamped = m.records().iter().filter(|r| r.get(sch, DIRICHLET).unwrap().is_some()).count();
        let loaded = m.records().iter().filter(|r| r.get(sch, NEUMANN).unwrap().is_some()).count();
        assert_eq!((clamped, loaded), (28, 28));
    }

    #[test]
    fn dataset_is_reproducible() {
        let s = BeamSpec::default();
        let cfg = BeamDatasetConfig { train_instances: 3, train_points: 10, test_instances: 2, test_points: 20 };
        let (a, b) = beam_dataset(&s, &cfg, 9).unwrap();
        assert_eq!((a.len(), b.len(), a[0].queries.len(), b[0].queries.len()), (3, 2, 10, 20));
        assert_eq!(beam_dataset(&s, &cfg, 9).unwrap(), (a.clone(), b));
        assert!(a.iter().flat_map(|x| &x.queries).all(|&p| s.bbox().contains(p)));
        assert!(a.iter().all(|x| (0.5..=1.5).contains(&x.moment)));
    }
}
