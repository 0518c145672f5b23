use std::time::Instant;

use physloop::math::{exp_so3, Pose, Vec3};
use physloop::pointmap_align::{
    alignment_gradient, alignment_residual, global_align, synth_graph, AlignOptions, AlignmentState, PairGraph,
    SynthTopology,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest relative depth error after removing the best global scale.
fn depth_error(est: &AlignmentState, gt: &AlignmentState) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (e, t) in est.depths.iter().flatten().zip(gt.depths.iter().flatten()) {
        num += e * t;
        den += t * t;
    }
    let s = num / den;
    est.depths
        .iter()
        .flatten()
        .zip(gt.depths.iter().flatten())
        .map(|(e, t)| (e / s - t).abs() / t)
        .fold(0.0, f64::max)
}

fn jittered(s: &AlignmentState, seed: u64, amount: f64) -> AlignmentState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = s.clone();
    for d in out.depths.iter_mut().flatten() {
        *d *= 1.0 + rng.random_range(-amount..amount);
    }
    for p in out.poses.iter_mut().skip(1) {
        let w = Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5);
        p.rotation *= exp_so3(&(w * amount));
        p.translation += (Vec3::new(rng.random(), rng.random(), rng.random()) - Vec3::repeat(0.5)) * amount;
    }
    for s in out.scales.iter_mut().skip(1) {
        *s *= 1.0 + rng.random_range(-amount..amount);
    }
    out
}

#[test]
fn noise_free_graphs_recover_depths() {
    for (views, topo) in [(3, SynthTopology::Full), (4, SynthTopology::Ring), (6, SynthTopology::Ring)] {
        let (g, gt) = synth_graph(views, 16, 16, 0.0, views as u64, topo);
        assert!(alignment_residual(&gt, &g).unwrap() < 1e-10);
        let t0 = Instant::now();
        let res = global_align(&g, &AlignOptions::default(), None).unwrap();
        assert!(t0.elapsed().as_secs_f64() < 10.0);
        let err = depth_error(&res.state, &gt);
        assert!(err < 1e-3, "{views} views: {err}");
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn gradient_matches_central_differences_on_random_probes() {
    let (g, gt) = synth_graph(4, 4, 4, 0.01, 21, SynthTopology::Full);
    let s = jittered(&gt, 3, 0.05);
    let an = alignment_gradient(&s, &g).unwrap();
    let f = |st: &AlignmentState| alignment_residual(st, &g).unwrap();
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..24 {
        let (mut p, mut m) = (s.clone(), s.clone());
        let analytic = match rng.random_range(0..4) {
            0 => {
                let (v, px) = (rng.random_range(0..4), rng.random_range(0..16));
                p.depths[v][px] += h;
                m.depths[v][px] -= h;
                an.depths[v][px]
            }
            1 => {
                let (v, i) = (rng.random_range(0..4), rng.random_range(0..3));
                let mut e = Vec3::zeros();
                e[i] = h;
                p.poses[v].rotation = s.poses[v].rotation * exp_so3(&e);
                m.poses[v].rotation = s.poses[v].rotation * exp_so3(&-e);
                an.rotation[v][i]
            }
            2 => {
                let (v, i) = (rng.random_range(0..4), rng.random_range(0..3));
                p.poses[v].translation[i] += h;
                m.poses[v].translation[i] -= h;
                an.translation[v][i]
            }
            _ => {
                let e = rng.random_range(0..g.edges.len());
                p.scales[e] *= h.exp();
                m.scales[e] *= (-h).exp();
                an.log_scales[e]
            }
        };
        let numeric = (f(&p) - f(&m)) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        assert!(rel < 1e-3, "analytic {analytic} vs numeric {numeric}");
    }
}

fn moved(g: &PairGraph, s: &AlignmentState, by: &Pose) -> (PairGraph, AlignmentState) {
    let mut g = g.clone();
    for e in &mut g.edges {
        for m in &mut e.maps {
            for p in &mut m.points {
                *p = by.apply(p);
            }
        }
    }
    let mut s = s.clone();
    for p in &mut s.poses {
        *p = by.compose(p);
    }
    (g, s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn residual_is_gauge_invariant(seed in 0u64..100, w in prop::array::uniform3(-2.0..2.0f64), t in prop::array::uniform3(-3.0..3.0f64)) {
        let (g, gt) = synth_graph(3, 4, 4, 0.02, seed, SynthTopology::Full);
        let s = jittered(&gt, seed, 0.05);
        let by = Pose::new(exp_so3(&Vec3::from(w)), Vec3::from(t));
        let (g2, s2) = moved(&g, &s, &by);
        let (a, b) = (alignment_residual(&s, &g).unwrap(), alignment_residual(&s2, &g2).unwrap());
        prop_assert!((a - b).abs() <= 1e-8 * a.max(1e-12));
    }

    #[test]
    fn joint_scaling_scales_residual_quadratically(seed in 0u64..100, k in 0.1..10.0f64) {
        let (g, gt) = synth_graph(3, 4, 4, 0.02, seed, SynthTopology::Ring);
        let s = jittered(&gt, seed, 0.05);
        let mut scaled = s.clone();
        for d in scaled.depths.iter_mut().flatten() {
            *d *= k;
        }
        for sc in &mut scaled.scales {
            *sc *= k;
        }
        let (a, b) = (alignment_residual(&s, &g).unwrap(), alignment_residual(&scaled, &g).unwrap());
        prop_assert!((b - k * k * a).abs() <= 1e-9 * b.max(1e-12));
    }
}
