use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::AlignError;
use crate::math::{Pose, Vec3};

/// Pinhole intrinsics; pixel `(u, v)` is column `u`, row `v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Unnormalized ray `K⁻¹[u, v, 1]` (unit z component).
    pub fn ray(&self, u: usize, v: usize) -> Vec3 {
        Vec3::new((u as f64 - self.cx) / self.fx, (v as f64 - self.cy) / self.fy, 1.0)
    }

    pub fn rays(&self, height: usize, width: usize) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(height * width);
        for v in 0..height {
            for u in 0..width {
                out.push(self.ray(u, v));
            }
        }
        out
    }
}

/// Row-major H×W grid of 3D points and their non-negative confidences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointMap {
    pub view: usize,
    pub height: usize,
    pub width: usize,
    pub points: Vec<Vec3>,
    pub confidences: Vec<f64>,
}

impl PointMap {
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<(), AlignError> {
        if self.points.len() != self.len() || self.confidences.len() != self.len() {
            return Err(AlignError::DimensionMismatch(format!(
                "point map for view {} is {}x{} but has {} points / {} confidences",
                self.view,
                self.height,
                self.width,
                self.points.len(),
                self.confidences.len()
            )));
        }
        if self.confidences.iter().any(|c| !(*c >= 0.0)) {
            return Err(AlignError::InvalidGraph(format!(
                "negative or NaN confidence in point map for view {}",
                self.view
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub views: (usize, usize),
    /// Point maps for `views.0` and `views.1`, in that order.
    pub maps: [PointMap; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairGraph {
    pub n_views: usize,
    pub height: usize,
    pub width: usize,
    pub intrinsics: Vec<Intrinsics>,
    /// Sorted lexicographically by `views`; the first edge carries the scale gauge.
    pub edges: Vec<Edge>,
}

impl PairGraph {
    pub fn new(
        n_views: usize,
        height: usize,
        width: usize,
        intrinsics: Vec<Intrinsics>,
        mut edges: Vec<Edge>,
    ) -> Result<PairGraph, AlignError> {
        edges.sort_by_key(|e| e.views);
        let g = PairGraph {
            n_views,
            height,
            width,
            intrinsics,
            edges,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        if self.intrinsics.len() != self.n_views {
            return Err(AlignError::DimensionMismatch(format!(
                "{} intrinsics for {} views",
                self.intrinsics.len(),
                self.n_views
            )));
        }
        if self.edges.is_empty() {
            return Err(AlignError::InvalidGraph("graph has no edges".into()));
        }
        for w in self.edges.windows(2) {
            if w[0].views >= w[1].views {
                return Err(AlignError::InvalidGraph(
                    "edges must be sorted and unique".into(),
                ));
            }
        }
        for e in &self.edges {
            let (a, b) = e.views;
            if a == b || a >= self.n_views || b >= self.n_views {
                return Err(AlignError::InvalidGraph(format!(
                    "edge ({a}, {b}) must join two distinct existing views"
                )));
            }
            for (k, m) in e.maps.iter().enumerate() {
                let expect = if k == 0 { a } else { b };
                if m.view != expect || m.height != self.height || m.width != self.width {
                    return Err(AlignError::DimensionMismatch(format!(
                        "edge ({a}, {b}) map {k} is for view {} at {}x{}",
                        m.view, m.height, m.width
                    )));
                }
                m.validate()?;
            }
        }
        let reached = self.reachable_from(0);
        if reached < self.n_views {
            return Err(AlignError::DisconnectedGraph {
                reached,
                total: self.n_views,
            });
        }
        Ok(())
    }

    fn reachable_from(&self, start: usize) -> usize {
        let mut seen = vec![false; self.n_views];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for e in &self.edges {
                let other = match e.views {
                    (a, b) if a == v => b,
                    (a, b) if b == v => a,
                    _ => continue,
                };
                if !seen[other] {
                    seen[other] = true;
                    count += 1;
                    queue.push_back(other);
                }
            }
        }
        count
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Unknowns of the alignment problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentState {
    /// Per-view row-major depth grids, all positive.
    pub depths: Vec<Vec<f64>>,
    /// World-from-camera poses.
    pub poses: Vec<Pose>,
    /// Per-edge scales, in graph edge order.
    pub scales: Vec<f64>,
}

impl AlignmentState {
    pub fn check_dims(&self, graph: &PairGraph) -> Result<(), AlignError> {
        if self.depths.len() != graph.n_views || self.poses.len() != graph.n_views {
            return Err(AlignError::DimensionMismatch(format!(
                "state has {} depth maps and {} poses for {} views",
                self.depths.len(),
                self.poses.len(),
                graph.n_views
            )));
        }
        if self.scales.len() != graph.edges.len() {
            return Err(AlignError::DimensionMismatch(format!(
                "state has {} scales for {} edges",
                self.scales.len(),
                graph.edges.len()
            )));
        }
        for (v, d) in self.depths.iter().enumerate() {
            if d.len() != graph.pixels() {
                return Err(AlignError::DimensionMismatch(format!(
                    "depth map {v} has {} pixels, expected {}",
                    d.len(),
                    graph.pixels()
                )));
            }
        }
        Ok(())
    }
}
