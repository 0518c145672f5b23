use physloop::bench::{generate_scenario_with, Difficulty, GenOptions};
use physloop::body::{MotionSequence, Skeleton};
use physloop::geometry::{Mesh, Sdf};
use physloop::math::{exp_so3, Pose, Vec3};
use physloop::scene_align::{
    align_placement, contact_loss, detect_contact, non_contact_loss, sp3d, ContactLabel, PlacedObject,
    PlacementOptions, PlacementState, SP3D_EPS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Vec<Vec3> {
    (0..n)
        .map(|_| Vec3::new(rng.random_range(-spread..spread), rng.random_range(-spread..spread), rng.random_range(-spread..spread)))
        .collect()
}

/// Independent double-loop evaluation of the non-contact loss.
fn non_contact_oracle(part: &[Vec3], verts: &[Vec3]) -> f64 {
    let mut c = Vec3::zeros();
    for p in part {
        c += p;
    }
    c /= part.len() as f64;
    let mut first = 0.0;
    let mut second = 0.0;
    for v in verts {
        first += ((c.x - v.x).powi(2) + (c.y - v.y).powi(2) + (c.z - v.z).powi(2)).sqrt();
        let mut best = f64::MAX;
        for p in part {
            let d = ((p.x - v.x).powi(2) + (p.y - v.y).powi(2) + (p.z - v.z).powi(2)).sqrt();
            if d < best {
                best = d;
            }
        }
        second += best;
    }
    (first + second) / verts.len() as f64
}

#[test]
fn non_contact_loss_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n_p = rng.random_range(1..6);
        let n_o = rng.random_range(1..9);
        let part = points(&mut rng, n_p, 2.0);
        let verts = points(&mut rng, n_o, 2.0);
        let got = non_contact_loss(&part, &verts).unwrap();
        assert!((got - non_contact_oracle(&part, &verts)).abs() < 1e-12);
    }
}

#[test]
fn contact_loss_matches_per_point_oracle() {
    let sdf = Sdf::new(&Mesh::unit_cube()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let pose = Pose::new(exp_so3(&(points(&mut rng, 1, 1.0)[0])), points(&mut rng, 1, 0.3)[0]);
        let obj = PlacedObject { sdf: &sdf, pose };
        let n = rng.random_range(1..6);
        let part = points(&mut rng, n, 1.0);
        let oracle = part
            .iter()
            .map(|k| {
                let d = sdf.signed_distance(&pose.apply_inverse(k));
                if d < 0.0 {
                    -d
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / part.len() as f64;
        assert!((contact_loss(&part, &obj).unwrap() - oracle).abs() < 1e-12);
    }
}

#[test]
fn far_body_is_non_contact() {
    let sdf = Sdf::new(&Mesh::unit_cube()).unwrap();
    let obj = PlacedObject {
        sdf: &sdf,
        pose: Pose::identity(),
    };
    let sk = Skeleton::standard();
    let kps = vec![Vec3::new(5.0, 0.0, 0.0); sk.len()];
    let st = detect_contact(&kps, &sk, &obj, 0.05).unwrap();
    assert_eq!(st.label, ContactLabel::NonContact);
    assert!((st.min_distance - 4.5).abs() < 1e-9);
}

#[test]
fn sp3d_half_penetrating_sequence() {
    let sdf = Sdf::new(&Mesh::unit_cube()).unwrap();
    let obj = PlacedObject {
        sdf: &sdf,
        pose: Pose::identity(),
    };
    let sk = Skeleton::standard();
    let k = sk.len();
    // 2 frames; the first is entirely inside, the second entirely outside
    let inside = vec![Vec3::zeros(); k];
    let outside = vec![Vec3::new(3.0, 0.0, 0.0); k];
    let m = MotionSequence::new(30.0, sk, vec![inside, outside], vec![]).unwrap();
    assert_eq!(sp3d(&m, &[obj], SP3D_EPS), 50.0);
}

#[test]
fn aligning_penetrating_sits_is_monotone_and_lowers_sp3d() {
    let opts = GenOptions {
        lift: [-0.035, -0.015],
        ..GenOptions::default()
    };
    let (mut before, mut after) = (0.0, 0.0);
    for seed in 0..6 {
        let s = generate_scenario_with(Difficulty::Easy, seed, &opts);
        let d = s.objects[0].body(None).unwrap();
        let sdf = Sdf::new(&d.mesh).unwrap();
        let init = PlacementState {
            objects: vec![s.objects[0].placement],
            human: Default::default(),
        };
        let popts = PlacementOptions {
            frame_stride: 3,
            max_iters: 60,
            ..Default::default()
        };
        let res = align_placement(&s.motion, &[&sdf], &init, &popts).unwrap();
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
        let pivot = s.motion.frames[0][physloop::body::kp::PELVIS];
        let m = s.motion.transformed(&res.state.human.pose_about(&pivot));
        before += sp3d(&s.motion, &[PlacedObject { sdf: &sdf, pose: d.pose }], SP3D_EPS);
        after += sp3d(&m, &[PlacedObject { sdf: &sdf, pose: res.state.objects[0].pose() }], SP3D_EPS);
    }
    assert!(before > 0.0);
    assert!(after <= 0.5 * before, "{before} -> {after}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn contact_loss_is_rigidly_invariant(seed in any::<u64>(), w in prop::array::uniform3(-3.0..3.0f64), t in prop::array::uniform3(-2.0..2.0f64)) {
        let sdf = Sdf::new(&Mesh::unit_cube()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let part = points(&mut rng, 4, 0.8);
        let g = Pose::new(exp_so3(&Vec3::from(w)), Vec3::from(t));
        let a = contact_loss(&part, &PlacedObject { sdf: &sdf, pose: Pose::identity() }).unwrap();
        let moved: Vec<Vec3> = part.iter().map(|p| g.apply(p)).collect();
        let b = contact_loss(&moved, &PlacedObject { sdf: &sdf, pose: g }).unwrap();
        prop_assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn contact_loss_zero_iff_nothing_inside(seed in any::<u64>()) {
        let sdf = Sdf::new(&Mesh::unit_cube()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let part = points(&mut rng, 3, 1.0);
        let obj = PlacedObject { sdf: &sdf, pose: Pose::identity() };
        let inside = part.iter().any(|p| sdf.signed_distance(p) < 0.0);
        prop_assert_eq!(contact_loss(&part, &obj).unwrap() == 0.0, !inside);
    }

    #[test]
    fn non_contact_loss_is_two_lipschitz(seed in any::<u64>(), dir in prop::array::uniform3(-1.0..1.0f64), step in 1e-4..0.5f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let part = points(&mut rng, 3, 1.0);
        let verts = points(&mut rng, 6, 1.0);
        let d = Vec3::from(dir);
        prop_assume!(d.norm() > 1e-3);
        let dx = d.normalize() * step;
        let shifted: Vec<Vec3> = part.iter().map(|p| p + dx).collect();
        let a = non_contact_loss(&part, &verts).unwrap();
        let b = non_contact_loss(&shifted, &verts).unwrap();
        prop_assert!((a - b).abs() <= 2.0 * step + 1e-12);
    }
}
