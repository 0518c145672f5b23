use std::f64::consts::PI;

use super::mesh::require_watertight;
use super::{GeometryError, Mesh};
use crate::math::{Aabb, Vec3};

/// Exact signed distance to a watertight mesh: magnitude from the nearest
/// triangle, sign from the generalized winding number. Negative inside.
///
/// Faces are grouped into closed components with their bounding boxes; a
/// closed component contributes zero winding outside its box, which lets
/// most queries skip most triangles without changing the result.
#[derive(Clone, Debug)]
pub struct Sdf {
    mesh: Mesh,
    components: Vec<Component>,
}

#[derive(Clone, Debug)]
struct Component {
    faces: Vec<usize>,
    aabb: Aabb,
}

impl Sdf {
    pub fn new(mesh: &Mesh) -> Result<Sdf, GeometryError> {
        require_watertight(mesh)?;
        let components = mesh
            .connected_components()
            .into_iter()
            .map(|faces| {
                let mut aabb = Aabb::empty();
                for &f in &faces {
                    for &v in &mesh.faces[f] {
                        aabb.grow(&mesh.vertices[v]);
                    }
                }
                Component { faces, aabb }
            })
            .collect();
        Ok(Sdf {
            mesh: mesh.clone(),
            components,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn aabb(&self) -> Aabb {
        let mut b = Aabb::empty();
        for c in &self.components {
            b.grow(&c.aabb.min);
            b.grow(&c.aabb.max);
        }
        b
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let (_, d) = self.closest_point(p);
        if self.is_inside(p) {
            -d
        } else {
            d
        }
    }

    /// Nearest surface point and the (unsigned) distance to it.
    pub fn closest_point(&self, p: &Vec3) -> (Vec3, f64) {
        let mut order: Vec<(f64, usize)> = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| (c.aabb.distance(p), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut best = (Vec3::zeros(), f64::INFINITY);
        for (box_dist, ci) in order {
            if box_dist > best.1 {
                break;
            }
            for &f in &self.components[ci].faces {
                let [a, b, c] = self.mesh.triangle(f);
                let q = closest_point_on_triangle(p, &a, &b, &c);
                let d = (q - p).norm();
                if d < best.1 {
                    best = (q, d);
                }
            }
        }
        best
    }

    /// Generalized winding number (solid angle sum over 4π).
    pub fn winding_number(&self, p: &Vec3) -> f64 {
        let mut total = 0.0;
        for c in &self.components {
            if !c.aabb.contains(p) {
                continue;
            }
            for &f in &c.faces {
                let [a, b, cc] = self.mesh.triangle(f);
                total += solid_angle(&(a - p), &(b - p), &(cc - p));
            }
        }
        total / (4.0 * PI)
    }

    pub fn is_inside(&self, p: &Vec3) -> bool {
        self.winding_number(p).abs() > 0.5
    }
}

// Van Oosterom–Strackee signed solid angle of a triangle seen from the origin.
fn solid_angle(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    let num = a.dot(&b.cross(c));
    let den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la + c.dot(a) * lb;
    2.0 * num.atan2(den)
}

/// Closest point to `p` on triangle `abc` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Independent route: plane projection when it lands inside, else edge clamps.
    fn brute_distance(mesh: &Mesh, p: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        for f in 0..mesh.faces.len() {
            let [a, b, c] = mesh.triangle(f);
            let n = (b - a).cross(&(c - a)).normalize();
            let q = p - n * n.dot(&(p - a));
            // barycentric inside test
            let inside = [(a, b), (b, c), (c, a)]
                .iter()
                .all(|(u, v)| (v - u).cross(&(q - u)).dot(&n) >= 0.0);
            let mut d = if inside { (p - q).norm() } else { f64::INFINITY };
            for (u, v) in [(a, b), (b, c), (c, a)] {
                let t = ((p - u).dot(&(v - u)) / (v - u).norm_squared()).clamp(0.0, 1.0);
                d = d.min((p - (u + (v - u) * t)).norm());
            }
            best = best.min(d);
        }
        best
    }

    #[test]
    fn unit_cube_center_and_outside() {
        let sdf = Sdf::new(&Mesh::unit_cube()).unwrap();
        assert!((sdf.signed_distance(&Vec3::zeros()) + 0.5).abs() < 1e-12);
        assert!((sdf.signed_distance(&Vec3::new(1.0, 0.0, 0.0)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn icosphere_shell_distance_matches_brute_force() {
        let mesh = Mesh::icosphere("ico", 1.0, 4);
        let sdf = Sdf::new(&mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let dir = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let p = dir * 1.3;
            let d = sdf.signed_distance(&p);
            let oracle = brute_distance(&mesh, &p);
            assert!((d - oracle).abs() < 1e-9);
            assert!((d - 0.3).abs() < 1e-3, "d = {d}");
        }
    }

    #[test]
    fn non_watertight_rejected() {
        let mut m = Mesh::unit_cube();
        m.faces.pop();
        assert!(matches!(
            Sdf::new(&m),
            Err(GeometryError::NonWatertightSource { .. })
        ));
    }

    #[test]
    fn multi_component_sign() {
        let m = Mesh::merge(
            "pair",
            &[
                Mesh::unit_cube(),
                Mesh::unit_cube().translated(Vec3::new(3.0, 0.0, 0.0)),
            ],
        );
        let sdf = Sdf::new(&m).unwrap();
        assert!(sdf.signed_distance(&Vec3::new(3.0, 0.1, 0.0)) < 0.0);
        assert!((sdf.signed_distance(&Vec3::new(1.5, 0.0, 0.0)) - 1.0).abs() < 1e-12);
    }
}
