use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AlignmentState, Edge, Intrinsics, PairGraph, PointMap};
use crate::math::{Mat3, Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthTopology {
    /// Every pair of views.
    Full,
    /// Consecutive views, closing the loop.
    Ring,
}

struct Sphere {
    center: Vec3,
    radius: f64,
}

/// Nearest positive hit of `origin + s·dir` with any sphere; the enclosing
/// backdrop sphere guarantees a hit from inside.
fn cast(origin: &Vec3, dir: &Vec3, spheres: &[Sphere]) -> f64 {
    let mut best = f64::INFINITY;
    for sp in spheres {
        let oc = origin - sp.center;
        let a = dir.norm_squared();
        let b = oc.dot(dir);
        let c = oc.norm_squared() - sp.radius * sp.radius;
        let disc = b * b - a * c;
        if disc < 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        for s in [(-b - sq) / a, (-b + sq) / a] {
            if s > 1e-6 && s < best {
                best = s;
                break;
            }
        }
    }
    best
}

fn look_at(eye: &Vec3, target: &Vec3) -> Pose {
    let z = (target - eye).normalize();
    let x = z.cross(&Vec3::z()).normalize();
    let y = z.cross(&x);
    Pose::new(Mat3::from_columns(&[x, y, z]), *eye)
}

/// Random landmark spheres inside a backdrop, seen by cameras spaced on an
/// arc around them. World coordinates are view 0's camera frame. Point maps
/// are exact up to per-edge scale, then perturbed by isotropic Gaussian
/// noise of standard deviation `noise` meters.
pub fn synth_graph(
    n_views: usize,
    height: usize,
    width: usize,
    noise: f64,
    seed: u64,
    topology: SynthTopology,
) -> (PairGraph, AlignmentState) {
    assert!(n_views >= 2, "need at least two views");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spheres: Vec<Sphere> = (0..6)
        .map(|_| Sphere {
            center: Vec3::new(
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.8..0.8),
                rng.random_range(-0.5..0.5),
            ),
            radius: rng.random_range(0.25..0.5),
        })
        .collect();
    spheres.push(Sphere {
        center: Vec3::zeros(),
        radius: 6.0,
    });

    let arc = std::f64::consts::FRAC_PI_2;
    let world_poses: Vec<Pose> = (0..n_views)
        .map(|i| {
            let a = arc * (i as f64 / (n_views - 1) as f64 - 0.5) + rng.random_range(-0.05..0.05);
            let eye = Vec3::new(3.0 * a.cos(), 3.0 * a.sin(), rng.random_range(0.3..0.8));
            look_at(&eye, &Vec3::new(0.0, 0.0, rng.random_range(-0.1..0.1)))
        })
        .collect();
    let k = Intrinsics {
        fx: width as f64,
        fy: width as f64,
        cx: (width as f64 - 1.0) / 2.0,
        cy: (height as f64 - 1.0) / 2.0,
    };
    let rays = k.rays(height, width);
    let depths: Vec<Vec<f64>> = world_poses
        .iter()
        .map(|p| {
            rays.iter()
                .map(|r| cast(&p.translation, &p.apply_vector(r), &spheres))
                .collect()
        })
        .collect();
    let to_ref = world_poses[0].inverse();
    let mut poses: Vec<Pose> = world_poses.iter().map(|p| to_ref.compose(p)).collect();
    poses[0] = Pose::identity();

    let mut pairs: Vec<(usize, usize)> = match topology {
        SynthTopology::Full => (0..n_views)
            .flat_map(|a| (a + 1..n_views).map(move |b| (a, b)))
            .collect(),
        SynthTopology::Ring => (0..n_views)
            .map(|i| {
                let j = (i + 1) % n_views;
                (i.min(j), i.max(j))
            })
            .collect(),
    };
    pairs.sort();
    pairs.dedup();

    let gauss = Normal::new(0.0, 1.0).unwrap();
    let mut scales = Vec::with_capacity(pairs.len());
    let mut edges = Vec::with_capacity(pairs.len());
    for (i, &(a, b)) in pairs.iter().enumerate() {
        let sigma = if i == 0 { 1.0 } else { rng.random_range(0.5..2.0) };
        scales.push(sigma);
        let mut map = |v: usize| PointMap {
            view: v,
            height,
            width,
            points: rays
                .iter()
                .zip(&depths[v])
                .map(|(r, d)| {
                    let jitter = Vec3::from_fn(|_, _| noise * gauss.sample(&mut rng));
                    poses[v].apply(&(r * (d / sigma))) + jitter
                })
                .collect(),
            confidences: (0..height * width).map(|_| rng.random_range(0.5..1.5)).collect(),
        };
        let maps = [map(a), map(b)];
        edges.push(Edge { views: (a, b), maps });
    }
    let graph = PairGraph::new(n_views, height, width, vec![k; n_views], edges)
        .expect("synthetic graph is valid");
    (
        graph,
        AlignmentState {
            depths,
            poses,
            scales,
        },
    )
}
