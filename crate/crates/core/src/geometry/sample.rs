use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeometryError, Mesh};
use crate::math::{Pose, Vec3};

/// Points drawn uniformly by area from a mesh surface, with the face normal
/// at each point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSamples {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
}

impl SurfaceSamples {
    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn transformed(&self, pose: &Pose) -> SurfaceSamples {
        SurfaceSamples {
            points: self.points.iter().map(|p| pose.apply(p)).collect(),
            normals: self.normals.iter().map(|n| pose.apply_vector(n)).collect(),
        }
    }

    /// Samples within `radius` of `center`.
    pub fn within(&self, center: &Vec3, radius: f64) -> SurfaceSamples {
        let keep: Vec<usize> = (0..self.points.len())
            .filter(|&i| (self.points[i] - center).norm() <= radius)
            .collect();
        SurfaceSamples {
            points: keep.iter().map(|&i| self.points[i]).collect(),
            normals: keep.iter().map(|&i| self.normals[i]).collect(),
        }
    }
}

/// Area-weighted uniform sampling, deterministic for a fixed seed.
pub fn sample_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<SurfaceSamples, GeometryError> {
    if n == 0 {
        return Err(GeometryError::ZeroSamples);
    }
    if mesh.faces.is_empty() {
        return Err(GeometryError::EmptyMesh(mesh.name.clone()));
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut acc = 0.0;
    for f in 0..mesh.faces.len() {
        acc += mesh.face_area(f);
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random::<f64>() * acc;
        let f = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let [a, b, c] = mesh.triangle(f);
        let r1: f64 = rng.random::<f64>().sqrt();
        let r2: f64 = rng.random();
        points.push(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
        normals.push(mesh.face_normal(f));
    }
    Ok(SurfaceSamples { points, normals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Sdf;

    fn unit_square() -> Mesh {
        Mesh::new(
            "quad",
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn planar_source_stays_planar() {
        let s = sample_surface(&unit_square(), 4, 0).unwrap();
        assert_eq!(s.count(), 4);
        for p in &s.points {
            assert!(p.z.abs() < 1e-9);
        }
        for n in &s.normals {
            assert!((n.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let m = Mesh::icosphere("s", 1.0, 1);
        let a = sample_surface(&m, 1000, 42).unwrap();
        let b = sample_surface(&m, 1000, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_surface(&m, 1000, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            sample_surface(&unit_square(), 0, 0),
            Err(GeometryError::ZeroSamples)
        ));
        let empty = Mesh::new("e", vec![], vec![]).unwrap();
        assert!(matches!(
            sample_surface(&empty, 3, 0),
            Err(GeometryError::EmptyMesh(_))
        ));
    }

    #[test]
    fn per_face_counts_follow_area() {
        let m = Mesh::unit_cube();
        let n = 60_000;
        let s = sample_surface(&m, n, 5).unwrap();
        // assign each sample to its triangle by barycentric containment
        let mut counts = vec![0usize; m.faces.len()];
        for p in &s.points {
            let f = (0..m.faces.len())
                .find(|&f| {
                    let [a, b, c] = m.triangle(f);
                    let nrm = m.face_normal(f);
                    (p - a).dot(&nrm).abs() < 1e-9
                        && [(a, b), (b, c), (c, a)]
                            .iter()
                            .all(|(u, v)| (v - u).cross(&(p - u)).dot(&nrm) >= -1e-12)
                })
                .unwrap();
            counts[f] += 1;
        }
        let total_area = m.surface_area();
        for (f, &c) in counts.iter().enumerate() {
            let prob = m.face_area(f) / total_area;
            let mean = n as f64 * prob;
            let sigma = (n as f64 * prob * (1.0 - prob)).sqrt();
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "face {f}: {c} vs {mean}±{sigma}");
        }
    }

    #[test]
    fn samples_lie_on_surface() {
        let m = Mesh::icosphere("s", 0.5, 2);
        let sdf = Sdf::new(&m).unwrap();
        let s = sample_surface(&m, 300, 9).unwrap();
        for p in &s.points {
            assert!(sdf.signed_distance(p).abs() < 1e-5);
        }
    }
}
