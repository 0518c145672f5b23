//! Triangle meshes and the queries every other module leans on: exact
//! signed distance, area-weighted surface sampling, watertightness
//! reporting, mass properties and convex hulls.
//!
//! All lengths are meters. Meshes are immutable once built, so queries can
//! be shared freely across threads.

mod hull;
mod mesh;
mod obj;
mod sample;
mod sdf;

pub use hull::ConvexHull;
pub use mesh::{center_of_mass, is_watertight, MassProperties, Mesh, WatertightReport};
pub use obj::{parse_obj, read_obj, write_obj, write_obj_string};
pub use sample::{sample_surface, SurfaceSamples};
pub use sdf::{closest_point_on_triangle, Sdf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("mesh `{name}` is not watertight ({boundary} boundary, {non_manifold} non-manifold, {inconsistent} inconsistently oriented edges)")]
    NonWatertightSource {
        name: String,
        boundary: usize,
        non_manifold: usize,
        inconsistent: usize,
    },
    #[error("mesh `{0}` has no faces")]
    EmptyMesh(String),
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("OBJ parse error at line {line}: {message}")]
    Obj { line: usize, message: String },
    #[error("degenerate point set for convex hull: {0}")]
    DegenerateHull(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
