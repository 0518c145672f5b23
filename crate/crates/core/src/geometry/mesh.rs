use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::math::{Aabb, Mat3, Pose, Vec3};

/// Faces with area below this are dropped at construction.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh in meters. Faces are counter-clockwise seen from
/// outside, so face normals point out of the solid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mesh {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    /// Validates indices and drops degenerate faces (with a warning).
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Vec3>,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self, GeometryError> {
        let name = name.into();
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= n {
                    return Err(GeometryError::IndexOutOfRange {
                        face: fi,
                        index: i,
                        count: n,
                    });
                }
            }
        }
        let before = faces.len();
        let faces: Vec<[usize; 3]> = faces
            .into_iter()
            .filter(|f| triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]) >= DEGENERATE_AREA)
            .collect();
        if faces.len() != before {
            log::warn!(
                "mesh `{}`: dropped {} degenerate face(s)",
                name,
                before - faces.len()
            );
        }
        Ok(Mesh {
            name,
            vertices,
            faces,
        })
    }

    /// Axis-aligned box with the given center and half extents.
    pub fn cuboid(name: impl Into<String>, center: Vec3, half: Vec3) -> Mesh {
        let mut vertices = Vec::with_capacity(8);
        for i in 0..8 {
            let s = Vec3::new(
                if i & 1 == 0 { -1.0 } else { 1.0 },
                if i & 2 == 0 { -1.0 } else { 1.0 },
                if i & 4 == 0 { -1.0 } else { 1.0 },
            );
            vertices.push(center + half.component_mul(&s));
        }
        Mesh {
            name: name.into(),
            vertices,
            faces: CUBOID_FACES.to_vec(),
        }
    }

    /// Unit cube centered at the origin.
    pub fn unit_cube() -> Mesh {
        Mesh::cuboid("unit_cube", Vec3::zeros(), Vec3::repeat(0.5))
    }

    /// Geodesic sphere built by repeated subdivision of an icosahedron.
    pub fn icosphere(name: impl Into<String>, radius: f64, subdivisions: u32) -> Mesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vec3> = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
            let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for f in &faces {
                let ab = mid(f[0], f[1], &mut vertices);
                let bc = mid(f[1], f[2], &mut vertices);
                let ca = mid(f[2], f[0], &mut vertices);
                next.push([f[0], ab, ca]);
                next.push([f[1], bc, ab]);
                next.push([f[2], ca, bc]);
                next.push([ab, bc, ca]);
            }
            faces = next;
        }
        for v in &mut vertices {
            *v *= radius;
        }
        Mesh {
            name: name.into(),
            vertices,
            faces,
        }
    }

    pub fn transformed(&self, pose: &Pose) -> Mesh {
        Mesh {
            name: self.name.clone(),
            vertices: self.vertices.iter().map(|v| pose.apply(v)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn translated(&self, t: Vec3) -> Mesh {
        self.transformed(&Pose::from_translation(t))
    }

    /// Disjoint union; vertex indices of later meshes are shifted.
    pub fn merge(name: impl Into<String>, parts: &[Mesh]) -> Mesh {
        let mut vertices = Vec::new();
        let mut faces = Vec::new();
        for m in parts {
            let off = vertices.len();
            vertices.extend_from_slice(&m.vertices);
            faces.extend(m.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
        }
        Mesh {
            name: name.into(),
            vertices,
            faces,
        }
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        triangle_area(&a, &b, &c)
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    /// Mean of the vertex positions (not the volume centroid).
    pub fn vertex_centroid(&self) -> Vec3 {
        let s: Vec3 = self.vertices.iter().sum();
        s / self.vertices.len().max(1) as f64
    }

    /// Groups faces into edge-connected components.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.vertices.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for f in &self.faces {
            for k in 1..3 {
                let a = find(&mut parent, f[0]);
                let b = find(&mut parent, f[k]);
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            let r = find(&mut parent, f[0]);
            groups.entry(r).or_default().push(fi);
        }
        groups.into_values().collect()
    }

    /// Returns a copy keeping only the faces listed, with unused vertices removed.
    pub fn submesh(&self, faces: &[usize]) -> Mesh {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut out = Vec::with_capacity(faces.len());
        for &fi in faces {
            let mut tri = [0; 3];
            for (k, &vi) in self.faces[fi].iter().enumerate() {
                if remap[vi] == usize::MAX {
                    remap[vi] = vertices.len();
                    vertices.push(self.vertices[vi]);
                }
                tri[k] = remap[vi];
            }
            out.push(tri);
        }
        Mesh {
            name: self.name.clone(),
            vertices,
            faces: out,
        }
    }
}

// Outward-facing triangles of a box whose vertex i has coordinates given by bits (x, y, z) of i.
const CUBOID_FACES: [[usize; 3]; 12] = [
    [0, 2, 3],
    [0, 3, 1],
    [4, 5, 7],
    [4, 7, 6],
    [0, 1, 5],
    [0, 5, 4],
    [2, 6, 7],
    [2, 7, 3],
    [0, 4, 6],
    [0, 6, 2],
    [1, 3, 7],
    [1, 7, 5],
];

pub(crate) fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Edge-incidence defects of a mesh. Edges are reported as sorted vertex
/// pairs, themselves sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatertightReport {
    pub watertight: bool,
    /// Edges used by exactly one face.
    pub boundary_edges: Vec<[usize; 2]>,
    /// Edges used by more than two faces.
    pub non_manifold_edges: Vec<[usize; 2]>,
    /// Edges shared by two faces that traverse it in the same direction.
    pub inconsistent_edges: Vec<[usize; 2]>,
}

impl WatertightReport {
    pub fn defect_count(&self) -> usize {
        self.boundary_edges.len() + self.non_manifold_edges.len() + self.inconsistent_edges.len()
    }
}

/// True iff every edge is shared by exactly two faces that traverse it in
/// opposite directions. Defects are reported, never thrown.
pub fn is_watertight(mesh: &Mesh) -> WatertightReport {
    // (lo, hi) -> (uses as lo->hi, uses as hi->lo)
    let mut edges: BTreeMap<(usize, usize), (u32, u32)> = BTreeMap::new();
    for f in &mesh.faces {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            let e = edges.entry((a.min(b), a.max(b))).or_insert((0, 0));
            if a < b {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    let mut report = WatertightReport::default();
    for (&(a, b), &(fwd, back)) in &edges {
        match fwd + back {
            1 => report.boundary_edges.push([a, b]),
            2 if fwd == 1 => {}
            2 => report.inconsistent_edges.push([a, b]),
            _ => report.non_manifold_edges.push([a, b]),
        }
    }
    report.watertight = !mesh.faces.is_empty() && report.defect_count() == 0;
    report
}

pub(crate) fn require_watertight(mesh: &Mesh) -> Result<(), GeometryError> {
    if mesh.faces.is_empty() {
        return Err(GeometryError::EmptyMesh(mesh.name.clone()));
    }
    let r = is_watertight(mesh);
    if r.watertight {
        Ok(())
    } else {
        Err(GeometryError::NonWatertightSource {
            name: mesh.name.clone(),
            boundary: r.boundary_edges.len(),
            non_manifold: r.non_manifold_edges.len(),
            inconsistent: r.inconsistent_edges.len(),
        })
    }
}

/// Volume, centroid and inertia (about the centroid) of a unit-density solid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MassProperties {
    pub volume: f64,
    pub center: Vec3,
    pub inertia: Mat3,
}

impl MassProperties {
    /// Integrates over signed tetrahedra fanned from the origin.
    pub fn of(mesh: &Mesh) -> Result<MassProperties, GeometryError> {
        require_watertight(mesh)?;
        let mut volume = 0.0;
        let mut first = Vec3::zeros();
        let mut second = Mat3::zeros();
        for f in 0..mesh.faces.len() {
            let [a, b, c] = mesh.triangle(f);
            let v = a.dot(&b.cross(&c)) / 6.0;
            volume += v;
            let s = a + b + c;
            first += v * s / 4.0;
            second += (v / 20.0) * (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose());
        }
        if volume.abs() < 1e-18 {
            return Err(GeometryError::DegenerateHull(format!(
                "mesh `{}` encloses no volume",
                mesh.name
            )));
        }
        let center = first / volume;
        let origin_inertia = Mat3::identity() * second.trace() - second;
        let shift = volume * (Mat3::identity() * center.norm_squared() - center * center.transpose());
        Ok(MassProperties {
            volume,
            center,
            inertia: origin_inertia - shift,
        })
    }
}

/// Volume-weighted centroid of a watertight, uniform-density solid.
pub fn center_of_mass(mesh: &Mesh) -> Result<Vec3, GeometryError> {
    Ok(MassProperties::of(mesh)?.center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::exp_so3;

    #[test]
    fn closed_cube_is_watertight() {
        let r = is_watertight(&Mesh::unit_cube());
        assert!(r.watertight);
        assert_eq!(r.defect_count(), 0);
    }

    #[test]
    fn open_cube_reports_boundary() {
        let mut m = Mesh::unit_cube();
        m.faces.truncate(10); // drop the +x square
        let r = is_watertight(&m);
        assert!(!r.watertight);
        assert!(r.boundary_edges.len() >= 3);
    }

    #[test]
    fn cubes_sharing_an_edge_are_non_manifold() {
        // second cube touches the first along the edge x = 0.5, y = 0.5 (vertices 3 and 7)
        let a = Mesh::unit_cube();
        let b = Mesh::unit_cube().translated(Vec3::new(1.0, 1.0, 0.0));
        let mut m = Mesh::merge("two", &[a.clone(), b.clone()]);
        // weld b's vertex 0 (-0.5+1, -0.5+1, -0.5) and 4 onto a's 3 and 7
        let off = a.vertices.len();
        for f in m.faces.iter_mut() {
            for i in f.iter_mut() {
                if *i == off {
                    *i = 3;
                } else if *i == off + 4 {
                    *i = 7;
                }
            }
        }
        // oracle: count faces using edge (3, 7) directly
        let uses = m
            .faces
            .iter()
            .filter(|f| f.contains(&3) && f.contains(&7))
            .count();
        assert_eq!(uses, 4);
        let r = is_watertight(&m);
        assert!(!r.watertight);
        assert_eq!(r.non_manifold_edges, vec![[3, 7]]);
    }

    #[test]
    fn flipped_face_is_inconsistent() {
        let mut m = Mesh::unit_cube();
        m.faces[0].swap(1, 2);
        let r = is_watertight(&m);
        assert!(!r.watertight);
        assert_eq!(r.inconsistent_edges.len(), 3);
    }

    #[test]
    fn degenerate_faces_dropped() {
        let v = vec![
            Vec3::zeros(),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let m = Mesh::new("sliver", v, vec![[0, 1, 2], [0, 1, 3]]).unwrap();
        assert_eq!(m.faces.len(), 1);
        assert!(Mesh::new("bad", vec![Vec3::zeros()], vec![[0, 0, 5]]).is_err());
    }

    #[test]
    fn cube_mass_properties() {
        let mp = MassProperties::of(&Mesh::unit_cube()).unwrap();
        assert!((mp.volume - 1.0).abs() < 1e-12);
        assert!(mp.center.norm() < 1e-12);
        // solid cube: I = m (a² + a²) / 12 = 1/6
        for i in 0..3 {
            assert!((mp.inertia[(i, i)] - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn com_translates() {
        let m = Mesh::unit_cube().translated(Vec3::new(2.0, 0.0, 0.0));
        let c = center_of_mass(&m).unwrap();
        assert!((c - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn l_shape_com_is_mass_weighted() {
        // two unit cubes side by side plus a 2x1x1 block on top of the first:
        // oracle is the volume-weighted mean of the cuboid centers
        let parts = [
            (Vec3::new(0.5, 0.5, 0.5), Vec3::repeat(0.5)),
            (Vec3::new(1.5, 0.5, 0.5), Vec3::repeat(0.5)),
            (Vec3::new(0.5, 0.5, 2.0), Vec3::new(0.5, 0.5, 1.0)),
        ];
        let meshes: Vec<Mesh> = parts.iter().map(|(c, h)| Mesh::cuboid("p", *c, *h)).collect();
        let m = Mesh::merge("L", &meshes);
        let mut num = Vec3::zeros();
        let mut den = 0.0;
        for (c, h) in &parts {
            let v = 8.0 * h.x * h.y * h.z;
            num += c * v;
            den += v;
        }
        assert!((center_of_mass(&m).unwrap() - num / den).norm() < 1e-9);
    }

    #[test]
    fn com_equivariant_under_rigid_motion() {
        let m = Mesh::icosphere("s", 0.7, 1).translated(Vec3::new(0.1, 0.2, 0.3));
        let pose = Pose::new(exp_so3(&Vec3::new(0.4, -1.1, 0.2)), Vec3::new(-3.0, 1.0, 0.5));
        let c0 = center_of_mass(&m).unwrap();
        let c1 = center_of_mass(&m.transformed(&pose)).unwrap();
        assert!((pose.apply(&c0) - c1).norm() < 1e-8);
    }

    #[test]
    fn com_requires_watertight() {
        let mut m = Mesh::unit_cube();
        m.faces.pop();
        assert!(matches!(
            center_of_mass(&m),
            Err(GeometryError::NonWatertightSource { .. })
        ));
    }

    #[test]
    fn icosphere_is_closed() {
        for s in 0..3 {
            let m = Mesh::icosphere("s", 1.0, s);
            assert!(is_watertight(&m).watertight);
            assert!(MassProperties::of(&m).unwrap().volume > 0.0);
        }
    }
}
