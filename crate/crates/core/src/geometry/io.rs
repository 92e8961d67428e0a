//! Mesh files.
//!
//! JSON layout:
//! ```json
//! { "nodes": [[x, y], ...],
//!   "groups": { "dirichlet": { "dim": 1, "values": { "0": [1.5], "7": [0.0] } } },
//!   "bbox": { "min": [x0, y0], "max": [x1, y1] } }
//! ```
//! `groups` holds a sparse node-index → vector map per group; `bbox` is
//! optional. CSV input has `x,y` followed by one column per group component,
//! named `group` (dim 1) or `group.i`; an empty cell marks the group absent.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BoundingBox, GeometryError, Mesh};
use crate::conditions::{ConditionGroup, ConditionRecord, ConditionSchema};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupFile {
    pub dim: usize,
    pub values: BTreeMap<usize, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshFile {
    pub nodes: Vec<[f64; 2]>,
    #[serde(default)]
    pub groups: BTreeMap<String, GroupFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoundingBox>,
}

impl MeshFile {
    pub fn from_mesh(mesh: &Mesh) -> Self {
        let mut groups = BTreeMap::new();
        for (k, g) in mesh.schema().groups().iter().enumerate() {
            let values = mesh
                .records()
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.values()[k].clone().map(|v| (i, v)))
                .collect();
            groups.insert(g.name.clone(), GroupFile { dim: g.dim, values });
        }
        Self { nodes: mesh.nodes().to_vec(), groups, bbox: Some(*mesh.bbox()) }
    }

    /// Builds the mesh. Without an explicit schema the groups are ordered by name.
    pub fn into_mesh(self, schema: Option<&ConditionSchema>) -> Result<Mesh, GeometryError> {
        let schema = match schema {
            Some(s) => s.clone(),
            None => ConditionSchema::new(
                self.groups.iter().map(|(n, g)| ConditionGroup { name: n.clone(), dim: g.dim }).collect(),
            )?,
        };
        let n = self.nodes.len();
        let mut records = vec![ConditionRecord::empty(&schema); n];
        for (name, group) in self.groups {
            let k = schema.index_of(&name)?;
            if schema.groups()[k].dim != group.dim {
                return Err(GeometryError::Invalid(format!("group `{name}` dim {} differs from schema", group.dim)));
            }
            for (i, v) in group.values {
                let rec = records
                    .get_mut(i)
                    .ok_or_else(|| GeometryError::Invalid(format!("group `{name}` references node {i} of {n}")))?;
                rec.set(&schema, &name, v)?;
            }
        }
        Mesh::new(self.nodes, records, schema, self.bbox)
    }
}

pub fn read_mesh_json<R: Read>(reader: R, schema: Option<&ConditionSchema>) -> Result<Mesh, GeometryError> {
    let file: MeshFile = serde_json::from_reader(reader).map_err(|e| GeometryError::Io(e.to_string()))?;
    file.into_mesh(schema)
}

pub fn write_mesh_json<W: Write>(mesh: &Mesh, writer: W) -> Result<(), GeometryError> {
    serde_json::to_writer(writer, &MeshFile::from_mesh(mesh)).map_err(|e| GeometryError::Io(e.to_string()))
}

/// Splits `name.i` into `(name, Some(i))`; a bare name is component 0 of a dim-1 group.
fn parse_column(col: &str) -> (String, Option<usize>) {
    if let Some((name, idx)) = col.rsplit_once('.') {
        if let Ok(i) = idx.parse() {
            return (name.to_string(), Some(i));
        }
    }
    (col.to_string(), None)
}

pub fn read_mesh_csv<R: Read>(reader: R, schema: Option<&ConditionSchema>) -> Result<Mesh, GeometryError> {
    let io = |e: csv::Error| GeometryError::Io(e.to_string());
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(io)?.clone();
    if header.get(0) != Some("x") || header.get(1) != Some("y") {
        return Err(GeometryError::Io("CSV mesh must start with columns x,y".into()));
    }
    // group name -> list of (component, column)
    let mut columns: Vec<(String, Vec<(usize, usize)>)> = Vec::new();
    for (col, name) in header.iter().enumerate().skip(2) {
        let (group, comp) = parse_column(name);
        let comp = comp.unwrap_or(0);
        match columns.iter_mut().find(|(g, _)| *g == group) {
            Some((_, cols)) => cols.push((comp, col)),
            None => columns.push((group, vec![(comp, col)])),
        }
    }
    for (g, cols) in &mut columns {
        cols.sort();
        if cols.iter().enumerate().any(|(i, (c, _))| *c != i) {
            return Err(GeometryError::Io(format!("group `{g}` has non-contiguous components")));
        }
    }
    let schema = match schema {
        Some(s) => s.clone(),
        None => ConditionSchema::new(
            columns.iter().map(|(n, c)| ConditionGroup { name: n.clone(), dim: c.len() }).collect(),
        )?,
    };
    let mut nodes = Vec::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(io)?;
        let num = |i: usize| -> Result<f64, GeometryError> {
            row.get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| GeometryError::Io(format!("row {}: column {i}: {e}", nodes.len())))
        };
        let node = [num(0)?, num(1)?];
        let mut rec = ConditionRecord::empty(&schema);
        for (group, cols) in &columns {
            let filled = cols.iter().filter(|(_, c)| !row.get(*c).unwrap_or("").is_empty()).count();
            if filled == 0 {
                continue;
            }
            if filled != cols.len() {
                return Err(GeometryError::Io(format!("row {}: group `{group}` partially filled", nodes.len())));
            }
            let values = cols.iter().map(|(_, c)| num(*c)).collect::<Result<Vec<_>, _>>()?;
            rec.set(&schema, group, values)?;
        }
        nodes.push(node);
        records.push(rec);
    }
    Mesh::new(nodes, records, schema, None)
}
