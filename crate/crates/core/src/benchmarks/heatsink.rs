//! Finned heat sink: a base slab with evenly spaced rectangular fins.
//! Bottom face at a prescribed temperature profile, fin tops at `t_top`,
//! every other face adiabatic.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BenchmarkError, BenchmarkInstance, Provenance};
use crate::conditions::{ConditionRecord, ConditionSchema, DIRICHLET, NEUMANN};
use crate::geometry::{BoundingBox, Domain, Mesh};

/// `((x − 2.5)² + 6.25) · a`
pub fn t_bottom(x: f64, a: f64) -> f64 {
    ((x - 2.5).powi(2) + 6.25) * a
}

pub fn heatsink_schema() -> ConditionSchema {
    ConditionSchema::thermal()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatsinkSpec {
    pub width: f64,
    pub base_height: f64,
    pub n_fins: usize,
    pub fin_width: f64,
    pub t_top: f64,
    pub height_range: [f64; 2],
    pub a_range: [f64; 2],
    pub node_spacing: f64,
    pub boundary_spacing: f64,
}

impl Default for HeatsinkSpec {
    fn default() -> Self {
        Self {
            width: 5.0,
            base_height: 0.5,
            n_fins: 4,
            fin_width: 0.4,
            t_top: 0.0,
            height_range: [1.5, 2.5],
            a_range: [0.5, 1.5],
            node_spacing: 0.1,
            boundary_spacing: 0.1,
        }
    }
}

impl HeatsinkSpec {
    pub fn sample_params<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        let pick = |rng: &mut R, [lo, hi]: [f64; 2]| if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let h = pick(rng, self.height_range);
        (h, pick(rng, self.a_range))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatsinkGeometry {
    pub width: f64,
    pub base_height: f64,
    pub height: f64,
    /// `[x0, x1]` span of each fin.
    pub fins: Vec<[f64; 2]>,
}

impl HeatsinkGeometry {
    pub fn new(spec: &HeatsinkSpec, height: f64) -> Result<Self, BenchmarkError> {
        let n = spec.n_fins;
        if !(spec.width > 0.0 && spec.base_height > 0.0 && height > spec.base_height) {
            return Err(BenchmarkError::Invalid(format!("height {height} must exceed base {}", spec.base_height)));
        }
        if n > 0 && !(spec.fin_width > 0.0 && spec.fin_width * n as f64 <= spec.width) {
            return Err(BenchmarkError::Invalid("fins do not fit on the base".into()));
        }
        let fins = (0..n)
            .map(|k| {
                let c = spec.width * (k as f64 + 0.5) / n as f64;
                [c - 0.5 * spec.fin_width, c + 0.5 * spec.fin_width]
            })
            .collect();
        Ok(Self { width: spec.width, base_height: spec.base_height, height, fins })
    }

    /// Top of the solid above `x`: the fin height over a fin, else the base.
    fn top_at(&self, x: f64) -> f64 {
        if self.fins.is_empty() || self.fins.iter().any(|f| x >= f[0] && x <= f[1]) {
            self.height
        } else {
            self.base_height
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox { min: [0.0, 0.0], max: [self.width, self.height] }
    }

    /// Bottom, top and adiabatic boundary samples at roughly `ds` spacing.
    pub fn boundary_samples(&self, ds: f64) -> Vec<BoundarySample> {
        let mut out = Vec::new();
        let mut segment = |a: [f64; 2], b: [f64; 2], tag: BoundaryTag, normal: [f64; 2], ends: (bool, bool)| {
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let n = ((len / ds).round() as usize).max(1);
            for i in 0..=n {
                if (i == 0 && !ends.0) || (i == n && !ends.1) {
                    continue;
                }
                let t = i as f64 / n as f64;
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                out.push(BoundarySample { point: p, tag, normal });
            }
        };
        let (w, b, h) = (self.width, self.base_height, self.height);
        segment([0.0, 0.0], [w, 0.0], BoundaryTag::Bottom, [0.0, -1.0], (true, true));
        if self.fins.is_empty() {
            segment([0.0, h], [w, h], BoundaryTag::Top, [0.0, 1.0], (true, true));
            segment([0.0, 0.0], [0.0, h], BoundaryTag::Other, [-1.0, 0.0], (false, false));
            segment([w, 0.0], [w, h], BoundaryTag::Other, [1.0, 0.0], (false, false));
            return out;
        }
        segment([0.0, 0.0], [0.0, b], BoundaryTag::Other, [-1.0, 0.0], (false, false));
        segment([w, 0.0], [w, b], BoundaryTag::Other, [1.0, 0.0], (false, false));
        let mut x = 0.0;
        for f in &self.fins {
            if f[0] > x {
                segment([x, b], [f[0], b], BoundaryTag::Other, [0.0, 1.0], (x == 0.0, false));
            }
            segment([f[0], b], [f[0], h], BoundaryTag::Other, [-1.0, 0.0], (false, false));
            segment([f[1], b], [f[1], h], BoundaryTag::Other, [1.0, 0.0], (false, false));
            segment([f[0], h], [f[1], h], BoundaryTag::Top, [0.0, 1.0], (true, true));
            x = f[1];
        }
        if x < w {
            segment([x, b], [w, b], BoundaryTag::Other, [0.0, 1.0], (false, false));
            out.push(BoundarySample { point: [w, b], tag: BoundaryTag::Other, normal: [1.0, 0.0] });
        }
        out
    }
}

impl Domain for HeatsinkGeometry {
    fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= 0.0 && p[0] <= self.width && p[1] >= 0.0 && p[1] <= self.top_at(p[0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Bottom,
    Top,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySample {
    pub point: [f64; 2],
    pub tag: BoundaryTag,
    /// Outward unit normal.
    pub normal: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatsinkInstance {
    pub geometry: HeatsinkGeometry,
    pub a: f64,
    pub t_top: f64,
    pub boundary: Vec<BoundarySample>,
    pub instance: BenchmarkInstance,
}

/// Mesh of interior grid nodes plus tagged boundary nodes; no labels.
pub fn heatsink_instance(spec: &HeatsinkSpec, height: f64, a: f64) -> Result<HeatsinkInstance, BenchmarkError> {
    let geometry = HeatsinkGeometry::new(spec, height)?;
    let schema = heatsink_schema();
    let boundary = geometry.boundary_samples(spec.boundary_spacing);
    let mut nodes = Vec::new();
    let mut records = Vec::new();
    for s in &boundary {
        let r = ConditionRecord::empty(&schema);
        let r = match s.tag {
            BoundaryTag::Bottom => r.with(&schema, DIRICHLET, vec![t_bottom(s.point[0], a)])?,
            BoundaryTag::Top => r.with(&schema, DIRICHLET, vec![spec.t_top])?,
            BoundaryTag::Other => r.with(&schema, NEUMANN, vec![s.normal[0], s.normal[1], 0.0, 0.0])?,
        };
        nodes.push(s.point);
        records.push(r);
    }
    let h = spec.node_spacing;
    let margin = 0.25 * h;
    let (nx, ny) = ((geometry.width / h).ceil() as usize, (height / h).ceil() as usize);
    for j in 1..ny {
        for i in 1..nx {
            let p = [i as f64 * h, j as f64 * h];
            let inside = [[-margin, 0.0], [margin, 0.0], [0.0, -margin], [0.0, margin]]
                .iter()
                .all(|d| geometry.contains([p[0] + d[0], p[1] + d[1]]));
            if inside {
                nodes.push(p);
                records.push(ConditionRecord::empty(&schema));
            }
        }
    }
    let mesh = Mesh::new(nodes, records, schema, Some(geometry.bbox()))?;
    let instance = BenchmarkInstance {
        mesh,
        queries: Vec::new(),
        labels: None,
        fields: vec!["T".into()],
        params: BTreeMap::from([("H".to_string(), height), ("a".to_string(), a)]),
        provenance: Provenance::Unlabeled,
    };
    Ok(HeatsinkInstance { geometry, a, t_top: spec.t_top, boundary, instance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottom_profile() {
        assert_eq!(t_bottom(2.5, 1.3), 6.25 * 1.3);
        assert_eq!(t_bottom(0.0, 2.0), 25.0);
        assert_eq!(t_bottom(0.0, 1.0), 12.5);
    }

    #[test]
    fn geometry_membership() {
        let g = HeatsinkGeometry::new(&HeatsinkSpec::default(), 2.0).unwrap();
        assert!(g.contains([0.1, 0.3]));
        assert!(g.contains([g.fins[0][0] + 0.1, 1.9]));
        assert!(!g.contains([0.05, 1.0]));
        assert!(!g.contains([2.5, 1.0]), "gap between the middle fins");
        assert!(HeatsinkGeometry::new(&HeatsinkSpec::default(), 0.3).is_err());
    }

    #[test]
    fn boundary_samples_lie_on_boundary_with_unit_normals() {
        let g = HeatsinkGeometry::new(&HeatsinkSpec::default(), 2.0).unwrap();
        let samples = g.boundary_samples(0.1);
        for s in &samples {
            assert!(g.contains(s.point), "{:?}", s.point);
            let out = [s.point[0] + 1e-3 * s.normal[0], s.point[1] + 1e-3 * s.normal[1]];
            assert!(!g.contains(out), "normal not outward at {:?}", s.point);
            let inward = [s.point[0] - 1e-3 * s.normal[0], s.point[1] - 1e-3 * s.normal[1]];
            assert!(g.contains(inward));
        }
        assert!(samples.iter().any(|s| s.tag == BoundaryTag::Top));
        assert!(samples.iter().filter(|s| s.tag == BoundaryTag::Bottom).all(|s| s.point[1] == 0.0));
    }

    #[test]
    fn instance_is_unlabeled_and_tagged() {
        let hs = heatsink_instance(&HeatsinkSpec::default(), 2.0, 1.0).unwrap();
        assert!(hs.instance.labels.is_none());
        let s = hs.instance.mesh.schema();
        let recs = hs.instance.mesh.records();
        assert!(recs.iter().any(|r| r.get(s, NEUMANN).unwrap().is_some()));
        let bottom_mid = hs.instance.mesh.nodes().iter().position(|p| *p == [2.5, 0.0]).unwrap();
        assert_eq!(recs[bottom_mid].get(s, DIRICHLET).unwrap(), Some(&[6.25][..]));
    }
}
