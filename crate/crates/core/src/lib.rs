//! Mesh-encoder / query-decoder transformer for PDE surrogates with gated
//! condition embedding and Hilbert-curve patching.

pub mod backend;
pub mod benchmarks;
pub mod conditions;
pub mod geometry;
pub mod gce;
pub mod model;
pub mod nn;
pub mod training;
