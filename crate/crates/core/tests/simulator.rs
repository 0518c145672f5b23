use physloop::dsro::{ShapeFamily, ShapeParam};
use physloop::geometry::Mesh;
use physloop::math::{exp_so3, Pose, Vec3};
use physloop::simulator::{settle, BodyDesc, SettleParams, World, DEFAULT_DT, GRAVITY};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random chair or box dropped from a random height and attitude.
fn dropped(seed: u64) -> BodyDesc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Vec3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-3.0..3.0));
    let z = rng.random_range(0.8..1.5);
    let pose = Pose::new(exp_so3(&w), Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), z));
    if seed % 2 == 0 {
        let chair = ShapeFamily::stable().sample(&mut rng, None).decode();
        chair.body("chair", pose)
    } else {
        let half = Vec3::new(rng.random_range(0.1..0.4), rng.random_range(0.1..0.4), rng.random_range(0.1..0.4));
        BodyDesc::new("box", Mesh::cuboid("box", Vec3::zeros(), half), pose)
    }
}

#[test]
fn free_fall_follows_the_closed_form() {
    let chair = ShapeParam::canonical().decode();
    let z0 = 2.0;
    let mut w = World::new(&[chair.body("chair", Pose::from_translation(Vec3::new(0.0, 0.0, z0)))]).unwrap();
    let c0 = w.bodies[0].com().z;
    for step in 1..=(0.4 / DEFAULT_DT).round() as usize {
        w.step(DEFAULT_DT).unwrap();
        let t = step as f64 * DEFAULT_DT;
        let drop = 0.5 * GRAVITY * t * t;
        let got = c0 - w.bodies[0].com().z;
        assert!((got - drop).abs() <= 0.01 * drop, "t {t}: fell {got}, expected {drop}");
    }
}

#[test]
fn energy_never_rises_over_seeded_settles() {
    for seed in 0..50 {
        let mut w = World::new(&[dropped(seed)]).unwrap();
        let mut e = w.total_energy();
        for _ in 0..(2.0 / DEFAULT_DT) as usize {
            w.step(DEFAULT_DT).unwrap();
            let next = w.total_energy();
            assert!(next <= e + 1e-9 * e.abs().max(1.0), "seed {seed} at t {}: {e} -> {next}", w.time);
            e = next;
        }
    }
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    let params = SettleParams {
        record_trajectory: true,
        t_max: 3.0,
        ..SettleParams::default()
    };
    for seed in [3, 8] {
        let world = || World::new(&[dropped(seed), dropped(seed + 100)]).unwrap();
        let a = settle(world(), &params).unwrap();
        let b = settle(world(), &params).unwrap();
        assert_eq!(a, b);
        assert!(a.trajectory.as_ref().is_some_and(|t| !t.is_empty()));
    }
}
