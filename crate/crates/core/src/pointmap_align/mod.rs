//! Global alignment of pairwise point maps.
//!
//! Each edge `e = (m, n)` of a [`PairGraph`] carries one point map per
//! endpoint view. A point map stores, for every pixel of its view, a 3D
//! point in the shared reference frame whose offset from that view's camera
//! center is known only up to the edge's scale. Alignment recovers per-view
//! depth maps `D_n`, world-from-camera poses `π_n` and per-edge scales `σ_e`
//! minimizing
//!
//! ```text
//! Σ_e Σ_{n∈e} Σ_px C^e_n(px) · ‖ D_n(px)·K_n⁻¹[px,1] − σ_e · π_n⁻¹(P^e_n(px)) ‖²
//! ```
//!
//! The depth is compared along its pixel ray so that every view's rotation
//! is observable; the z-component of `π_n⁻¹(P)` is the projected depth
//! returned by [`project_pointmap`]. Pixels that land behind the camera are
//! excluded from the sum.

mod graph;
mod solver;
mod synth;

pub use graph::{AlignmentState, Edge, Intrinsics, PairGraph, PointMap};
pub use solver::{
    alignment_gradient, alignment_residual, global_align, initialize_state, AlignGradient,
    AlignOptions, AlignResult,
};
pub use synth::{synth_graph, SynthTopology};

use thiserror::Error;

use crate::math::{Pose, Vec3};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("pair graph is disconnected ({reached} of {total} views reachable from view 0)")]
    DisconnectedGraph { reached: usize, total: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
}

/// Camera-frame coordinates of a point map seen from `pose`.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub camera_points: Vec<Vec3>,
    /// Per-pixel z; meaningful only where `valid`.
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
    pub behind_camera: usize,
}

/// Applies the inverse of the world-from-camera `pose` to every point and
/// reads off z. Non-positive depths are flagged invalid and counted.
pub fn project_pointmap(pose: &Pose, pointmap: &PointMap) -> Projection {
    let camera_points: Vec<Vec3> = pointmap.points.iter().map(|p| pose.apply_inverse(p)).collect();
    let depth: Vec<f64> = camera_points.iter().map(|q| q.z).collect();
    let valid: Vec<bool> = depth.iter().map(|&z| z > 0.0).collect();
    let behind_camera = valid.iter().filter(|v| !**v).count();
    Projection {
        camera_points,
        depth,
        valid,
        behind_camera,
    }
}
