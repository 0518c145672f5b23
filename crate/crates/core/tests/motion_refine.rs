use physloop::bench::templates::{SitExtras, SitTemplate};
use physloop::body::{kp, posed, sitting_local, standing_local, MotionSequence, Skeleton};
use physloop::dsro::ShapeParam;
use physloop::math::{exp_so3, Pose, Vec3};
use physloop::motion_refine::{
    center_point_loss_at, pa_mpjpe, refine_motion, scene_targeted_loss, w_mpjpe, RefineMode, RefineParams,
};
use physloop::simulator::BodyDesc;
use proptest::prelude::*;

fn hovering_sit(hover: f64) -> (MotionSequence, BodyDesc, Pose, f64) {
    let chair = ShapeParam::canonical().decode();
    let pose = Pose::from_yaw_translation(0.3, Vec3::new(0.5, 0.2, 0.0));
    let t = SitTemplate {
        hover,
        ..SitTemplate::default()
    };
    let m = t.motion(&pose, 0, chair.seat_top(), chair.dims.seat_depth, SitExtras::default());
    (m, chair.body("chair", pose), pose, chair.seat_top())
}

fn seat_gap(m: &MotionSequence, pose: &Pose, seat_top: f64) -> f64 {
    let last = m.frames.last().unwrap();
    [kp::L_SEAT, kp::R_SEAT]
        .iter()
        .map(|&k| (pose.apply_inverse(&last[k]).z - seat_top).abs())
        .fold(0.0, f64::max)
}

#[test]
fn hovering_sit_is_pulled_onto_the_seat() {
    let (m, body, pose, top) = hovering_sit(0.05);
    assert!(seat_gap(&m, &pose, top) > 0.045);
    let r = refine_motion(&m, &[body], &RefineParams::default(), 1).unwrap();
    let gap = seat_gap(&r.motion, &pose, top);
    assert!(gap < 0.01, "gap {gap}");
    assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(r.best_score.total <= r.input_score.total);
}

#[test]
fn refinement_is_deterministic_per_seed() {
    let (m, body, _, _) = hovering_sit(0.04);
    let p = RefineParams {
        population: 12,
        iterations: 3,
        ..RefineParams::default()
    };
    let a = refine_motion(&m, &[body.clone()], &p, 9).unwrap();
    let b = refine_motion(&m, &[body], &p, 9).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.motion.frames, b.motion.frames);
}

#[test]
fn zero_iterations_return_the_input() {
    let (m, body, _, _) = hovering_sit(0.03);
    for mode in [RefineMode::Surface, RefineMode::Center] {
        let p = RefineParams {
            iterations: 0,
            mode,
            ..RefineParams::default()
        };
        let r = refine_motion(&m, &[body.clone()], &p, 0).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert!(w_mpjpe(&r.motion, &m).unwrap() < 1e-6);
    }
}

#[test]
fn scene_loss_matches_pairwise_mean() {
    let k = [Vec3::new(0.1, 0.2, 0.3), Vec3::new(-0.4, 0.0, 1.0)];
    let s = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 2.0)];
    let mut sum = 0.0;
    for a in &k {
        for b in &s {
            sum += (a - b).norm_squared();
        }
    }
    let expect = sum / 6.0;
    assert!((scene_targeted_loss(&k, &s).unwrap() - expect).abs() < 1e-12);
}

fn cloud() -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(prop::array::uniform3(-2.0..2.0f64), 1..12).prop_map(|v| v.into_iter().map(Vec3::from).collect())
}

fn frames(seed: u64, n: usize) -> Vec<Vec<Vec3>> {
    (0..n)
        .map(|i| {
            let local = if (seed + i as u64) % 2 == 0 { standing_local() } else { sitting_local(0.45, 0.3, 0.7) };
            let w = Vec3::new(0.0, 0.0, 0.1 * i as f64 + seed as f64 * 0.01);
            posed(&local, &Pose::new(exp_so3(&w), Vec3::new(0.05 * i as f64, 0.0, 0.0)))
        })
        .collect()
}

fn seq(frames: Vec<Vec<Vec3>>) -> MotionSequence {
    MotionSequence::new(30.0, Skeleton::standard(), frames, vec![]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scene_loss_bounds_and_invariance(k in cloud(), s in cloud(), w in prop::array::uniform3(-3.0..3.0f64), t in prop::array::uniform3(-2.0..2.0f64)) {
        let l = scene_targeted_loss(&k, &s).unwrap();
        prop_assert!(l >= 0.0);
        // the squared distance between centroids is a lower bound
        let ck = k.iter().sum::<Vec3>() / k.len() as f64;
        let cs = s.iter().sum::<Vec3>() / s.len() as f64;
        prop_assert!(l + 1e-12 >= (ck - cs).norm_squared());
        let g = Pose::new(exp_so3(&Vec3::from(w)), Vec3::from(t));
        let k2: Vec<Vec3> = k.iter().map(|p| g.apply(p)).collect();
        let s2: Vec<Vec3> = s.iter().map(|p| g.apply(p)).collect();
        prop_assert!((scene_targeted_loss(&k2, &s2).unwrap() - l).abs() <= 1e-9 * l.max(1.0));
        prop_assert!((center_point_loss_at(&k, &cs).unwrap() - (ck - cs).norm_squared()).abs() < 1e-12);
    }

    #[test]
    fn pa_never_exceeds_world_error(seed in 0u64..50, n in 1usize..5, noise in 0.0..0.2f64) {
        let a = frames(seed, n);
        let b: Vec<Vec<Vec3>> = a
            .iter()
            .enumerate()
            .map(|(i, f)| f.iter().enumerate().map(|(j, p)| p + Vec3::new(noise * ((i + j) as f64).sin(), noise * (j as f64).cos(), 0.3)).collect())
            .collect();
        let (pa, w) = (pa_mpjpe(&seq(b.clone()), &seq(a.clone())).unwrap(), w_mpjpe(&seq(b), &seq(a)).unwrap());
        prop_assert!(pa <= w + 1e-9);
    }

    #[test]
    fn pa_vanishes_on_similarity_copies(seed in 0u64..50, s in 0.2..5.0f64, w in prop::array::uniform3(-3.0..3.0f64), t in prop::array::uniform3(-5.0..5.0f64)) {
        let a = frames(seed, 3);
        let r = exp_so3(&Vec3::from(w));
        let b: Vec<Vec<Vec3>> = a.iter().map(|f| f.iter().map(|p| s * (r * p) + Vec3::from(t)).collect()).collect();
        prop_assert!(pa_mpjpe(&seq(b), &seq(a)).unwrap() < 1e-8);
    }

    #[test]
    fn world_error_of_a_shift_is_its_length(seed in 0u64..50, t in prop::array::uniform3(-1.0..1.0f64)) {
        let a = seq(frames(seed, 2));
        let d = Vec3::from(t);
        let b = a.transformed(&Pose::from_translation(d));
        prop_assert!((w_mpjpe(&b, &a).unwrap() - d.norm()).abs() < 1e-12);
    }
}
