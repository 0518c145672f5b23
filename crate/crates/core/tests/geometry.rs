use physloop::dsro::{ShapeFamily, ShapeParam};
use physloop::geometry::{
    center_of_mass, is_watertight, read_obj, sample_surface, write_obj, Mesh, Sdf,
};
use physloop::math::{exp_so3, Pose, Vec3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chair(seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ShapeFamily::mixed().sample(&mut rng, None).decode().mesh
}

fn vec3() -> impl Strategy<Value = Vec3> {
    (-1.5..1.5f64, -1.5..1.5f64, -0.5..1.5f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn pose() -> impl Strategy<Value = Pose> {
    (vec3(), vec3()).prop_map(|(w, t)| Pose::new(exp_so3(&w), t))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sdf_is_one_lipschitz(seed in 0u64..8, p in vec3(), q in vec3()) {
        let sdf = Sdf::new(&chair(seed)).unwrap();
        let (a, b) = (sdf.signed_distance(&p), sdf.signed_distance(&q));
        prop_assert!(a <= b + (p - q).norm() + 1e-6);
        prop_assert!(b <= a + (p - q).norm() + 1e-6);
    }

    #[test]
    fn com_is_equivariant(seed in 0u64..8, g in pose()) {
        let m = chair(seed);
        let c = center_of_mass(&m).unwrap();
        let moved = center_of_mass(&m.transformed(&g)).unwrap();
        prop_assert!((moved - g.apply(&c)).norm() < 1e-8);
    }

    #[test]
    fn watertightness_survives_reindexing(seed in 0u64..8, shuffle in any::<u64>()) {
        let m = chair(seed);
        let n = m.vertices.len();
        // a permutation of the vertex indices
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = shuffle;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let mut vertices = vec![Vec3::zeros(); n];
        for (old, &new) in perm.iter().enumerate() {
            vertices[new] = m.vertices[old];
        }
        let faces = m.faces.iter().map(|f| f.map(|i| perm[i])).collect();
        let r = Mesh::new("shuffled", vertices, faces).unwrap();
        prop_assert_eq!(is_watertight(&r).watertight, is_watertight(&m).watertight);
        prop_assert!(is_watertight(&r).watertight);
    }
}

#[test]
fn surface_samples_sit_on_the_surface() {
    for seed in 0..6 {
        let m = chair(seed);
        let sdf = Sdf::new(&m).unwrap();
        let s = sample_surface(&m, 400, seed).unwrap();
        assert_eq!(s.count(), 400);
        for p in &s.points {
            assert!(sdf.signed_distance(p).abs() < 1e-5);
        }
    }
}

#[test]
fn decoded_shapes_are_watertight_and_round_trip_through_obj() {
    let dir = tempfile::tempdir().unwrap();
    let m = ShapeParam::canonical().decode().mesh;
    assert!(is_watertight(&m).watertight);
    let path = dir.path().join("chair.obj");
    write_obj(&m, &path).unwrap();
    let back = read_obj(&path).unwrap();
    assert_eq!(back.faces, m.faces);
    for (a, b) in back.vertices.iter().zip(&m.vertices) {
        assert_eq!(a, b);
    }
}

#[test]
fn sdf_sign_inside_chair_parts() {
    let c = ShapeParam::canonical().decode();
    let sdf = Sdf::new(&c.mesh).unwrap();
    let seat_center = Vec3::new(0.0, 0.0, c.dims.seat_height - 0.5 * c.dims.seat_thickness);
    assert!((sdf.signed_distance(&seat_center) + 0.5 * c.dims.seat_thickness).abs() < 1e-9);
    // under the seat, between the legs
    let below = Vec3::new(0.0, 0.0, 0.2);
    assert!(sdf.signed_distance(&below) > 0.1);
}
