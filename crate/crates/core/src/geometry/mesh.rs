use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::conditions::{ConditionRecord, ConditionSchema};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundingBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BoundingBox {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self, GeometryError> {
        if (0..2).any(|a| !(min[a] <= max[a]) || !min[a].is_finite() || !max[a].is_finite()) {
            return Err(GeometryError::Invalid(format!("bad bounding box {min:?}..{max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn from_points(points: &[[f64; 2]]) -> Result<Self, GeometryError> {
        let first = points.first().ok_or(GeometryError::Empty)?;
        let mut min = *first;
        let mut max = *first;
        for p in points {
            for a in 0..2 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Self::new(min, max)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    /// Affine map of the box onto `[-1, 1]²`; a degenerate axis maps to 0.
    pub fn normalize(&self, p: [f64; 2]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for a in 0..2 {
            let ext = self.extent(a);
            out[a] = if ext > 0.0 { 2.0 * (p[a] - self.min[a]) / ext - 1.0 } else { 0.0 };
        }
        out
    }
}

/// Node coordinates with one condition record per node.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    nodes: Vec<[f64; 2]>,
    records: Vec<ConditionRecord>,
    schema: ConditionSchema,
    bbox: BoundingBox,
}

impl Mesh {
    /// Builds a mesh; the bounding box is computed from the nodes when not given.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        records: Vec<ConditionRecord>,
        schema: ConditionSchema,
        bbox: Option<BoundingBox>,
    ) -> Result<Self, GeometryError> {
        if nodes.is_empty() {
            return Err(GeometryError::Empty);
        }
        if records.len() != nodes.len() {
            return Err(GeometryError::Invalid(format!("{} nodes but {} records", nodes.len(), records.len())));
        }
        if nodes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::Invalid("non-finite coordinate".into()));
        }
        for r in &records {
            r.validate(&schema)?;
        }
        let bbox = match bbox {
            Some(b) => b,
            None => BoundingBox::from_points(&nodes)?,
        };
        if let Some(p) = nodes.iter().find(|p| !bbox.contains(**p)) {
            return Err(GeometryError::OutsideBox(p[0], p[1]));
        }
        Ok(Self { nodes, records, schema, bbox })
    }

    /// Mesh whose nodes carry no conditions.
    pub fn bare(nodes: Vec<[f64; 2]>, schema: ConditionSchema) -> Result<Self, GeometryError> {
        let records = vec![ConditionRecord::empty(&schema); nodes.len()];
        Self::new(nodes, records, schema, None)
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn records(&self) -> &[ConditionRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [ConditionRecord] {
        &mut self.records
    }

    pub fn schema(&self) -> &ConditionSchema {
        &self.schema
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// New mesh with node `i` taken from position `perm[i]` of this one.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GeometryError> {
        if perm.len() != self.len() {
            return Err(GeometryError::Invalid("permutation length".into()));
        }
        let nodes = perm.iter().map(|&i| self.nodes[i]).collect();
        let records = perm.iter().map(|&i| self.records[i].clone()).collect();
        Self::new(nodes, records, self.schema.clone(), Some(self.bbox))
    }
}
