//! On-disk datasets.
//!
//! A dataset directory holds `manifest.json`, one mesh JSON per distinct node
//! set (`geometry_N.json`, carrying the condition groups shared by every
//! instance on it), an optional per-instance groups file with the remaining
//! groups, and a labels CSV per instance with columns `index,x,y,<fields>`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchmarkError, BenchmarkInstance, Provenance};
use crate::backend::Tensor;
use crate::conditions::ConditionSchema;
use crate::geometry::{GroupFile, MeshFile};

pub const DATASET_FORMAT: &str = "meshquery-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceEntry {
    pub mesh: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub benchmark: String,
    pub seed: u64,
    pub schema: ConditionSchema,
    pub fields: Vec<String>,
    pub provenance: Provenance,
    pub splits: BTreeMap<String, Vec<InstanceEntry>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub splits: BTreeMap<String, Vec<BenchmarkInstance>>,
}

fn io_err(e: impl std::fmt::Display) -> BenchmarkError {
    BenchmarkError::Io(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BenchmarkError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?);
    serde_json::to_writer(&mut w, value).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, BenchmarkError> {
    let r = BufReader::new(File::open(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?);
    serde_json::from_reader(r).map_err(|e| io_err(format!("{}: {e}", path.display())))
}

pub fn write_labels_csv<W: Write>(writer: W, queries: &[[f64; 2]], labels: &Tensor, fields: &[String]) -> Result<(), BenchmarkError> {
    if labels.shape() != [queries.len(), fields.len()] {
        return Err(BenchmarkError::Invalid(format!("labels {:?} vs {} queries × {} fields", labels.shape(), queries.len(), fields.len())));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["index".to_string(), "x".into(), "y".into()];
    header.extend(fields.iter().cloned());
    w.write_record(&header).map_err(io_err)?;
    for (i, q) in queries.iter().enumerate() {
        let mut row = vec![i.to_string(), q[0].to_string(), q[1].to_string()];
        row.extend(labels.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Returns query points, `[n, fields]` labels and the field names.
pub fn read_labels_csv<R: Read>(reader: R) -> Result<(Vec<[f64; 2]>, Tensor, Vec<String>), BenchmarkError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = r.headers().map_err(io_err)?.clone();
    if header.len() < 3 || &header[0] != "index" || &header[1] != "x" || &header[2] != "y" {
        return Err(BenchmarkError::Io("labels CSV must start with index,x,y".into()));
    }
    let fields: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
    let mut queries = Vec::new();
    let mut data = Vec::new();
    for (k, row) in r.records().enumerate() {
        let row = row.map_err(io_err)?;
        let num = |i: usize| row.get(i).unwrap_or("").parse::<f64>().map_err(|e| io_err(format!("row {k}, column {i}: {e}")));
        if row.get(0).and_then(|s| s.parse::<usize>().ok()) != Some(k) {
            return Err(io_err(format!("row {k}: index column out of sequence")));
        }
        queries.push([num(1)?, num(2)?]);
        for c in 0..fields.len() {
            data.push(num(3 + c)?);
        }
    }
    let labels = Tensor::matrix(queries.len(), fields.len(), data)?;
    Ok((queries, labels, fields))
}

/// Writes the splits under `dir` (created if missing). The output is a pure
/// function of the inputs.
pub fn write_dataset(
    dir: &Path,
    benchmark: &str,
    seed: u64,
    splits: &[(&str, &[BenchmarkInstance])],
) -> Result<DatasetManifest, BenchmarkError> {
    let first = splits
        .iter()
        .find_map(|(_, v)| v.first())
        .ok_or_else(|| BenchmarkError::Invalid("dataset has no instances".into()))?;
    let schema = first.mesh.schema().clone();
    let fields = first.fields.clone();
    let provenance = first.provenance;
    fs::create_dir_all(dir).map_err(io_err)?;

    // Group instances by node set; groups equal across a node set go into its geometry file.
    let files: Vec<Vec<MeshFile>> = splits.iter().map(|(_, v)| v.iter().map(|i| MeshFile::from_mesh(&i.mesh)).collect()).collect();
    let mut geometries: Vec<MeshFile> = Vec::new();
    let mut owner: Vec<Vec<usize>> = Vec::new();
    for (s, split) in files.iter().enumerate() {
        owner.push(Vec::new());
        for (i, f) in split.iter().enumerate() {
            let inst = &splits[s].1[i];
            if inst.mesh.schema() != &schema || inst.fields != fields {
                return Err(BenchmarkError::Invalid("instances disagree on schema or fields".into()));
            }
            let g = match geometries.iter().position(|g| g.nodes == f.nodes && g.bbox == f.bbox) {
                Some(g) => {
                    geometries[g].groups.retain(|name, group| f.groups.get(name) == Some(group));
                    g
                }
                None => {
                    geometries.push(f.clone());
                    geometries.len() - 1
                }
            };
            owner[s].push(g);
        }
    }
    for (g, geom) in geometries.iter().enumerate() {
        write_json(&dir.join(format!("geometry_{g}.json")), geom)?;
    }

    let mut entries = BTreeMap::new();
    for (s, (name, instances)) in splits.iter().enumerate() {
        let mut list = Vec::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            let g = owner[s][i];
            let extra: BTreeMap<&String, &GroupFile> =
                files[s][i].groups.iter().filter(|(n, _)| !geometries[g].groups.contains_key(*n)).collect();
            let stem = format!("{name}_{i:05}");
            let groups = if extra.is_empty() {
                None
            } else {
                let file = format!("{stem}.groups.json");
                write_json(&dir.join(&file), &extra)?;
                Some(file)
            };
            let labels = match &inst.labels {
                Some(l) => {
                    let file = format!("{stem}.labels.csv");
                    let w = BufWriter::new(File::create(dir.join(&file)).map_err(io_err)?);
                    write_labels_csv(w, &inst.queries, l, &fields)?;
                    Some(file)
                }
                None => None,
            };
            list.push(InstanceEntry { mesh: format!("geometry_{g}.json"), groups, labels, params: inst.params.clone() });
        }
        entries.insert(name.to_string(), list);
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        benchmark: benchmark.into(),
        seed,
        schema,
        fields,
        provenance,
        splits: entries,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, BenchmarkError> {
    let manifest: DatasetManifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format != DATASET_FORMAT || manifest.version != DATASET_VERSION {
        return Err(io_err(format!("unsupported dataset {} v{}", manifest.format, manifest.version)));
    }
    let mut cache: BTreeMap<String, MeshFile> = BTreeMap::new();
    let mut splits = BTreeMap::new();
    for (name, entries) in &manifest.splits {
        let mut list = Vec::with_capacity(entries.len());
        for e in entries {
            if !cache.contains_key(&e.mesh) {
                cache.insert(e.mesh.clone(), read_json(&dir.join(&e.mesh))?);
            }
            let mut file = cache[&e.mesh].clone();
            if let Some(g) = &e.groups {
                let extra: BTreeMap<String, GroupFile> = read_json(&dir.join(g))?;
                file.groups.extend(extra);
            }
            let mesh = file.into_mesh(Some(&manifest.schema))?;
            let (queries, labels) = match &e.labels {
                Some(l) => {
                    let (q, t, fields) = read_labels_csv(BufReader::new(File::open(dir.join(l)).map_err(io_err)?))?;
                    if fields != manifest.fields {
                        return Err(io_err(format!("{l}: fields {fields:?} differ from manifest")));
                    }
                    (q, Some(t))
                }
                None => (Vec::new(), None),
            };
            list.push(BenchmarkInstance {
                mesh,
                queries,
                labels,
                fields: manifest.fields.clone(),
                params: e.params.clone(),
                provenance: manifest.provenance,
            });
        }
        splits.insert(name.clone(), list);
    }
    Ok(Dataset { manifest, splits })
}
