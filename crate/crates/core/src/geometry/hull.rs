use std::collections::HashSet;

use super::sdf::closest_point_on_triangle;
use super::{GeometryError, Mesh};
use crate::math::{Aabb, Vec3};

/// Convex polytope stored as outward triangles plus the deduplicated set of
/// supporting planes (`n·x = d`, `n` unit and outward).
#[derive(Clone, Debug)]
pub struct ConvexHull {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub planes: Vec<(Vec3, f64)>,
}

impl ConvexHull {
    /// Incremental hull of a point cloud.
    pub fn from_points(points: &[Vec3]) -> Result<ConvexHull, GeometryError> {
        if points.len() < 4 {
            return Err(GeometryError::DegenerateHull(format!(
                "{} points",
                points.len()
            )));
        }
        let aabb = Aabb::from_points(points.iter());
        let scale = (aabb.max - aabb.min).norm().max(1e-12);
        let eps = 1e-10 * scale;

        let i0 = (0..points.len())
            .min_by(|&a, &b| points[a].x.total_cmp(&points[b].x))
            .unwrap();
        let i1 = argmax(points, |p| (p - points[i0]).norm_squared());
        let dir = (points[i1] - points[i0]).normalize();
        let i2 = argmax(points, |p| {
            let v = p - points[i0];
            (v - dir * v.dot(&dir)).norm_squared()
        });
        let n = (points[i1] - points[i0])
            .cross(&(points[i2] - points[i0]));
        if n.norm() < eps * scale {
            return Err(GeometryError::DegenerateHull("collinear points".into()));
        }
        let n = n.normalize();
        let i3 = argmax(points, |p| n.dot(&(p - points[i0])).abs());
        if n.dot(&(points[i3] - points[i0])).abs() < eps {
            return Err(GeometryError::DegenerateHull("coplanar points".into()));
        }

        let interior = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
        let mut faces: Vec<[usize; 3]> = Vec::new();
        for f in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
            faces.push(orient(points, f, &interior));
        }

        for (pi, p) in points.iter().enumerate() {
            if [i0, i1, i2, i3].contains(&pi) {
                continue;
            }
            let visible: Vec<bool> = faces
                .iter()
                .map(|f| {
                    let (n, d) = plane_of(points, f);
                    n.dot(p) - d > eps
                })
                .collect();
            if !visible.iter().any(|&v| v) {
                continue;
            }
            let mut visible_edges: HashSet<(usize, usize)> = HashSet::new();
            for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
                for k in 0..3 {
                    visible_edges.insert((f[k], f[(k + 1) % 3]));
                }
            }
            let mut next = Vec::with_capacity(faces.len() + 4);
            let mut horizon = Vec::new();
            for (f, &v) in faces.iter().zip(&visible) {
                if v {
                    for k in 0..3 {
                        let (a, b) = (f[k], f[(k + 1) % 3]);
                        if !visible_edges.contains(&(b, a)) {
                            horizon.push((a, b));
                        }
                    }
                } else {
                    next.push(*f);
                }
            }
            for (a, b) in horizon {
                next.push([a, b, pi]);
            }
            faces = next;
        }

        // Compact to the vertices actually used.
        let mut remap = vec![usize::MAX; points.len()];
        let mut vertices = Vec::new();
        for f in faces.iter_mut() {
            for i in f.iter_mut() {
                if remap[*i] == usize::MAX {
                    remap[*i] = vertices.len();
                    vertices.push(points[*i]);
                }
                *i = remap[*i];
            }
        }
        let mut planes: Vec<(Vec3, f64)> = Vec::new();
        for f in &faces {
            let (n, d) = plane_of(&vertices, f);
            if !planes
                .iter()
                .any(|(m, e)| (m - n).norm() < 1e-9 && (e - d).abs() < 1e-9 * scale)
            {
                planes.push((n, d));
            }
        }
        Ok(ConvexHull {
            vertices,
            faces,
            planes,
        })
    }

    pub fn from_mesh(mesh: &Mesh) -> Result<ConvexHull, GeometryError> {
        ConvexHull::from_points(&mesh.vertices)
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn to_mesh(&self, name: &str) -> Mesh {
        Mesh {
            name: name.to_string(),
            vertices: self.vertices.clone(),
            faces: self.faces.clone(),
        }
    }

    /// Largest plane distance: negative inside (minus the depth to the
    /// nearest face plane), a lower bound on the true distance outside.
    pub fn max_plane_distance(&self, p: &Vec3) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (n, d)) in self.planes.iter().enumerate() {
            let s = n.dot(p) - d;
            if s > best.0 {
                best = (s, i);
            }
        }
        best
    }

    /// Signed distance with the surface point and outward normal at it.
    pub fn signed_distance(&self, p: &Vec3) -> (f64, Vec3, Vec3) {
        let (s, pi) = self.max_plane_distance(p);
        if s <= 0.0 {
            let n = self.planes[pi].0;
            return (s, p - n * s, n);
        }
        let mut best = (f64::INFINITY, Vec3::zeros());
        for f in &self.faces {
            let q = closest_point_on_triangle(p, &self.vertices[f[0]], &self.vertices[f[1]], &self.vertices[f[2]]);
            let d = (p - q).norm();
            if d < best.0 {
                best = (d, q);
            }
        }
        let n = if best.0 > 1e-12 {
            (p - best.1) / best.0
        } else {
            self.planes[pi].0
        };
        (best.0, best.1, n)
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.max_plane_distance(p).0 <= tol
    }
}

fn argmax(points: &[Vec3], f: impl Fn(&Vec3) -> f64) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, p) in points.iter().enumerate() {
        let v = f(p);
        if v > best.0 {
            best = (v, i);
        }
    }
    best.1
}

fn plane_of(points: &[Vec3], f: &[usize; 3]) -> (Vec3, f64) {
    let n = (points[f[1]] - points[f[0]])
        .cross(&(points[f[2]] - points[f[0]]))
        .normalize();
    (n, n.dot(&points[f[0]]))
}

fn orient(points: &[Vec3], f: [usize; 3], interior: &Vec3) -> [usize; 3] {
    let (n, d) = plane_of(points, &f);
    if n.dot(interior) - d > 0.0 {
        [f[0], f[2], f[1]]
    } else {
        f
    }
}
