//! Meshes, Hilbert reserialization and fixed-size patch planning.

mod domain;
pub mod hilbert;
mod io;
mod mesh;
mod serialize;

pub use domain::Domain;
pub use hilbert::{code_from_digits, hilbert_digits, hilbert_index, hilbert_inverse};
pub use io::{read_mesh_csv, read_mesh_json, write_mesh_json, GroupFile, MeshFile};
pub use mesh::{BoundingBox, Mesh};
pub use serialize::{make_patches, quantize, reserialize, HilbertOrder, Patch, SerializationPlan, DEFAULT_ORDER};

use thiserror::Error;

use crate::conditions::ConditionError;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("Hilbert order {0} outside 1..=31")]
    Order(u32),
    #[error("cell ({u}, {v}) outside order-{order} grid")]
    CellOutOfRange { u: u64, v: u64, order: u32 },
    #[error("code {code} outside order-{order} curve")]
    CodeOutOfRange { code: u64, order: u32 },
    #[error("point ({0}, {1}) lies outside the bounding box")]
    OutsideBox(f64, f64),
    #[error("mesh has no nodes")]
    Empty,
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("patch size must be >= 1")]
    PatchSize,
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error("mesh I/O: {0}")]
    Io(String),
}
