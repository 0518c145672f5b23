use std::collections::VecDeque;

use nalgebra::{DMatrix, SMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{AlignError, AlignmentState, PairGraph};
use crate::math::{exp_so3, orthonormalize, Mat3, Pose, Vec3};

/// Depths never drop below this, which keeps the scale gauge from
/// collapsing toward the all-zero solution.
pub const MIN_DEPTH: f64 = 1e-4;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignOptions {
    pub max_iters: usize,
    /// Initial multiplier on the preconditioned step, per block.
    pub step_size: f64,
    /// Stop when one sweep lowers the residual by less than this fraction.
    pub tolerance: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        AlignOptions {
            max_iters: 500,
            step_size: 1.0,
            tolerance: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlignResult {
    pub state: AlignmentState,
    /// Best residual after initialization and after each sweep.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Gradient of the residual. Rotations use the right-multiplied chart
/// `R·exp([δ]×)` at `δ = 0`; scales are differentiated in log space.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignGradient {
    pub depths: Vec<Vec<f64>>,
    pub rotation: Vec<Vec3>,
    pub translation: Vec<Vec3>,
    pub log_scales: Vec<f64>,
}

struct Rays(Vec<Vec<Vec3>>);

impl Rays {
    fn of(graph: &PairGraph) -> Rays {
        Rays(
            graph
                .intrinsics
                .iter()
                .map(|k| k.rays(graph.height, graph.width))
                .collect(),
        )
    }
}

/// Visits every valid residual term `(edge, view, pixel, C, ray, q)`.
fn for_each_term(
    state: &AlignmentState,
    graph: &PairGraph,
    rays: &Rays,
    mut f: impl FnMut(usize, usize, usize, f64, &Vec3, &Vec3),
) {
    for (ei, e) in graph.edges.iter().enumerate() {
        for map in &e.maps {
            let v = map.view;
            let pose = &state.poses[v];
            let rt = pose.rotation.transpose();
            for (px, (p, &c)) in map.points.iter().zip(&map.confidences).enumerate() {
                if c == 0.0 {
                    continue;
                }
                let q = rt * (p - pose.translation);
                if q.z <= 0.0 {
                    continue;
                }
                f(ei, v, px, c, &rays.0[v][px], &q);
            }
        }
    }
}

pub fn alignment_residual(state: &AlignmentState, graph: &PairGraph) -> Result<f64, AlignError> {
    state.check_dims(graph)?;
    Ok(residual_unchecked(state, graph, &Rays::of(graph)))
}

fn residual_unchecked(state: &AlignmentState, graph: &PairGraph, rays: &Rays) -> f64 {
    let mut total = 0.0;
    for_each_term(state, graph, rays, |ei, v, px, c, ray, q| {
        let r = ray * state.depths[v][px] - q * state.scales[ei];
        total += c * r.norm_squared();
    });
    total
}

pub fn alignment_gradient(
    state: &AlignmentState,
    graph: &PairGraph,
) -> Result<AlignGradient, AlignError> {
    state.check_dims(graph)?;
    Ok(gradient_unchecked(state, graph, &Rays::of(graph)).0)
}

/// Gradient plus the Gauss–Newton diagonal used to precondition each block.
fn gradient_unchecked(
    state: &AlignmentState,
    graph: &PairGraph,
    rays: &Rays,
) -> (AlignGradient, AlignGradient) {
    let n = graph.n_views;
    let zero = || AlignGradient {
        depths: vec![vec![0.0; graph.pixels()]; n],
        rotation: vec![Vec3::zeros(); n],
        translation: vec![Vec3::zeros(); n],
        log_scales: vec![0.0; graph.edges.len()],
    };
    let (mut g, mut h) = (zero(), zero());
    for_each_term(state, graph, rays, |ei, v, px, c, ray, q| {
        let s = state.scales[ei];
        let r = ray * state.depths[v][px] - q * s;
        g.depths[v][px] += 2.0 * c * r.dot(ray);
        h.depths[v][px] += 2.0 * c * ray.norm_squared();
        g.log_scales[ei] += -2.0 * c * s * r.dot(q);
        h.log_scales[ei] += 2.0 * c * s * s * q.norm_squared();
        // dq/dδ = [q]×, dq/dt = -Rᵀ
        g.rotation[v] += -2.0 * c * s * r.cross(q);
        let q2 = q.component_mul(q);
        h.rotation[v] += 2.0 * c * s * s * (Vec3::repeat(q.norm_squared()) - q2);
        g.translation[v] += 2.0 * c * s * (state.poses[v].rotation * r);
        h.translation[v] += Vec3::repeat(2.0 * c * s * s);
    });
    (g, h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Block {
    Depth,
    Pose,
    Scale,
}

fn precond_step(g: f64, h: f64) -> f64 {
    if h > 0.0 {
        g / h
    } else {
        0.0
    }
}

fn stepped(
    state: &AlignmentState,
    g: &AlignGradient,
    h: &AlignGradient,
    block: Block,
    alpha: f64,
) -> AlignmentState {
    let mut out = state.clone();
    match block {
        Block::Depth => {
            for (dv, (gv, hv)) in out.depths.iter_mut().zip(g.depths.iter().zip(&h.depths)) {
                for (d, (gi, hi)) in dv.iter_mut().zip(gv.iter().zip(hv)) {
                    *d = (*d - alpha * precond_step(*gi, *hi)).max(MIN_DEPTH);
                }
            }
        }
        Block::Pose => {
            // view 0 is the pose gauge
            for v in 1..out.poses.len() {
                let dw = Vec3::from_fn(|i, _| -alpha * precond_step(g.rotation[v][i], h.rotation[v][i]));
                let dt = Vec3::from_fn(|i, _| {
                    -alpha * precond_step(g.translation[v][i], h.translation[v][i])
                });
                let p = &mut out.poses[v];
                p.rotation = orthonormalize(&(p.rotation * exp_so3(&dw)));
                p.translation += dt;
            }
        }
        Block::Scale => {
            // the first edge is the scale gauge
            for e in 1..out.scales.len() {
                let dl = -alpha * precond_step(g.log_scales[e], h.log_scales[e]);
                out.scales[e] *= dl.clamp(-2.0, 2.0).exp();
            }
        }
    }
    out
}

/// Minimizes the alignment residual by block-wise preconditioned gradient
/// descent, starting from [`initialize_state`] unless `init` is given.
pub fn global_align(
    graph: &PairGraph,
    opts: &AlignOptions,
    init: Option<AlignmentState>,
) -> Result<AlignResult, AlignError> {
    graph.validate()?;
    let rays = Rays::of(graph);
    let mut state = match init {
        Some(s) => {
            s.check_dims(graph)?;
            s
        }
        None => initialize_state(graph)?,
    };
    let mut best = residual_unchecked(&state, graph, &rays);
    let mut trace = vec![best];
    let mut alphas = [opts.step_size; 3];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iters {
        iterations = it + 1;
        let before = best;
        for (bi, block) in [Block::Depth, Block::Pose, Block::Scale].into_iter().enumerate() {
            let (g, h) = gradient_unchecked(&state, graph, &rays);
            for _ in 0..12 {
                let cand = stepped(&state, &g, &h, block, alphas[bi]);
                let r = residual_unchecked(&cand, graph, &rays);
                if r < best {
                    state = cand;
                    best = r;
                    alphas[bi] = (alphas[bi] * 1.5).min(4.0 * opts.step_size.max(1.0));
                    break;
                }
                alphas[bi] *= 0.5;
            }
            alphas[bi] = alphas[bi].max(1e-6);
        }
        trace.push(best);
        if before - best <= opts.tolerance * before.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("global alignment hit {} iterations without converging", opts.max_iters);
    }
    Ok(AlignResult {
        state,
        trace,
        converged,
        iterations,
    })
}

/// Closed-form starting point: per-view resection from the point maps,
/// scales chained across shared views, then the optimal depths for those.
pub fn initialize_state(graph: &PairGraph) -> Result<AlignmentState, AlignError> {
    graph.validate()?;
    let rays = Rays::of(graph);
    let n = graph.n_views;
    let mut poses = vec![Pose::identity(); n];
    for (v, pose) in poses.iter_mut().enumerate().skip(1) {
        let mut pairs = Vec::new();
        for e in &graph.edges {
            for m in e.maps.iter().filter(|m| m.view == v) {
                for (px, (p, &c)) in m.points.iter().zip(&m.confidences).enumerate() {
                    if c > 0.0 {
                        pairs.push((*p, rays.0[v][px], c.sqrt()));
                    }
                }
            }
        }
        *pose = resect(&pairs).ok_or_else(|| {
            AlignError::InvalidGraph(format!("cannot resect view {v} from its point maps"))
        })?;
    }

    // camera-frame depths of each edge's maps under the initial poses
    let zs: Vec<[Vec<f64>; 2]> = graph
        .edges
        .iter()
        .map(|e| {
            let f = |k: usize| -> Vec<f64> {
                let m = &e.maps[k];
                m.points.iter().map(|p| poses[m.view].apply_inverse(p).z).collect()
            };
            [f(0), f(1)]
        })
        .collect();
    let mut scales = vec![f64::NAN; graph.edges.len()];
    scales[0] = 1.0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(e) = queue.pop_front() {
        for (k, view) in [graph.edges[e].views.0, graph.edges[e].views.1].into_iter().enumerate() {
            for (f, other) in graph.edges.iter().enumerate() {
                if !scales[f].is_nan() {
                    continue;
                }
                let kf = match other.views {
                    (a, _) if a == view => 0,
                    (_, b) if b == view => 1,
                    _ => continue,
                };
                let mut ratios: Vec<f64> = zs[e][k]
                    .iter()
                    .zip(&zs[f][kf])
                    .filter(|(a, b)| **a > 0.0 && **b > 0.0)
                    .map(|(a, b)| a / b)
                    .collect();
                if ratios.is_empty() {
                    continue;
                }
                ratios.sort_by(f64::total_cmp);
                scales[f] = scales[e] * ratios[ratios.len() / 2];
                queue.push_back(f);
            }
        }
    }
    for s in scales.iter_mut().filter(|s| s.is_nan()) {
        *s = 1.0;
    }

    let mut state = AlignmentState {
        depths: vec![vec![1.0; graph.pixels()]; n],
        poses,
        scales,
    };
    // exact minimizer over depths with everything else fixed
    let mut num = vec![vec![0.0; graph.pixels()]; n];
    let mut den = vec![vec![0.0; graph.pixels()]; n];
    for_each_term(&state, graph, &rays, |ei, v, px, c, ray, q| {
        num[v][px] += c * state.scales[ei] * q.dot(ray);
        den[v][px] += c * ray.norm_squared();
    });
    for v in 0..n {
        for px in 0..graph.pixels() {
            state.depths[v][px] = if den[v][px] > 0.0 {
                (num[v][px] / den[v][px]).max(MIN_DEPTH)
            } else {
                1.0
            };
        }
    }
    Ok(state)
}

/// Linear resection: finds the world-from-camera pose whose camera-frame
/// points are parallel to the given rays (`(world point, ray, weight)`).
fn resect(pairs: &[(Vec3, Vec3, f64)]) -> Option<Pose> {
    if pairs.len() < 6 {
        return None;
    }
    let wsum: f64 = pairs.iter().map(|p| p.2).sum();
    let centroid = pairs.iter().map(|(p, _, w)| p * *w).sum::<Vec3>() / wsum;
    let spread = (pairs.iter().map(|(p, _, w)| w * (p - centroid).norm()).sum::<f64>() / wsum).max(1e-12);
    let mut ata = SMatrix::<f64, 12, 12>::zeros();
    for (p, ray, w) in pairs {
        let x = (p - centroid) / spread;
        let h = [x.x, x.y, x.z, 1.0];
        // rows of M are m0, m1, m2; constraints m0·h − a m2·h = 0 and m1·h − b m2·h = 0
        let (a, b) = (ray.x / ray.z, ray.y / ray.z);
        for (row, coef) in [(0usize, a), (1usize, b)] {
            let mut r = SMatrix::<f64, 1, 12>::zeros();
            for j in 0..4 {
                r[row * 4 + j] = h[j] * w;
                r[8 + j] = -coef * h[j] * w;
            }
            ata += r.transpose() * r;
        }
    }
    let eig = SymmetricEigen::new(DMatrix::from_column_slice(12, 12, ata.as_slice()));
    let imin = eig.eigenvalues.iamin();
    let m = eig.eigenvectors.column(imin);
    let a = Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
    let b = Vec3::new(m[3], m[7], m[11]);
    let svd = a.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let mut rt = u * vt;
    let lambda = svd.singular_values.mean();
    let mut b = b;
    // the null vector's sign is arbitrary
    if rt.determinant() < 0.0 {
        rt = -rt;
        b = -b;
    }
    // a = λ·spread·Rᵀ and b = λ·Rᵀ(centroid − t)
    let r = rt.transpose();
    let t = centroid - r * (b * spread / lambda);
    Some(Pose::new(r, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{exp_so3, Pose};
    use crate::pointmap_align::{synth_graph, Edge, Intrinsics, PointMap, SynthTopology};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_at_ground_truth() {
        let (g, gt) = synth_graph(3, 6, 8, 0.0, 1, SynthTopology::Full);
        assert!(alignment_residual(&gt, &g).unwrap() < 1e-10);
    }

    #[test]
    fn zero_confidence_gives_zero() {
        let (mut g, mut gt) = synth_graph(3, 4, 4, 0.0, 2, SynthTopology::Full);
        gt.scales[1] *= 1.7;
        gt.depths[2][3] += 0.4;
        for e in &mut g.edges {
            for m in &mut e.maps {
                m.confidences.iter_mut().for_each(|c| *c = 0.0);
            }
        }
        assert_eq!(alignment_residual(&gt, &g).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let (g, mut gt) = synth_graph(2, 4, 4, 0.0, 2, SynthTopology::Full);
        gt.scales.push(1.0);
        assert!(matches!(
            alignment_residual(&gt, &g),
            Err(AlignError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn two_by_two_matches_enumeration() {
        let k = Intrinsics {
            fx: 2.0,
            fy: 3.0,
            cx: 0.5,
            cy: 0.25,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut rnd_map = |view: usize| PointMap {
            view,
            height: 2,
            width: 2,
            points: (0..4)
                .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..4.0)))
                .collect(),
            confidences: (0..4).map(|_| rng.random_range(0.1..2.0)).collect(),
        };
        let edge = Edge {
            views: (0, 1),
            maps: [rnd_map(0), rnd_map(1)],
        };
        let g = PairGraph::new(2, 2, 2, vec![k, k], vec![edge]).unwrap();
        let state = AlignmentState {
            depths: vec![vec![2.0, 2.5, 3.0, 3.5], vec![1.0, 4.0, 2.0, 3.0]],
            poses: vec![
                Pose::identity(),
                Pose::new(exp_so3(&Vec3::new(0.05, -0.1, 0.02)), Vec3::new(0.3, 0.0, -0.2)),
            ],
            scales: vec![1.3],
        };
        // hand-expanded: 2 views × 4 pixels
        let mut expect = 0.0;
        for m in &g.edges[0].maps {
            let pose = state.poses[m.view];
            for (px, (u, v)) in [(0usize, 0usize), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
                let ray = Vec3::new((u as f64 - 0.5) / 2.0, (v as f64 - 0.25) / 3.0, 1.0);
                let q = pose.rotation.transpose() * (m.points[px] - pose.translation);
                let d = state.depths[m.view][px];
                let diff = [d * ray.x - 1.3 * q.x, d * ray.y - 1.3 * q.y, d - 1.3 * q.z];
                expect += m.confidences[px] * (diff[0].powi(2) + diff[1].powi(2) + diff[2].powi(2));
            }
        }
        let got = alignment_residual(&state, &g).unwrap();
        assert!((got - expect).abs() <= 1e-12 * expect.max(1.0), "{got} vs {expect}");
    }

    fn perturbed(gt: &AlignmentState, seed: u64, mag: f64) -> AlignmentState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = gt.clone();
        for d in s.depths.iter_mut().flatten() {
            *d *= 1.0 + mag * rng.random_range(-1.0..1.0);
        }
        for p in s.poses.iter_mut().skip(1) {
            let w = Vec3::from_fn(|_, _| mag * rng.random_range(-1.0..1.0));
            p.rotation = p.rotation * exp_so3(&w);
            p.translation += Vec3::from_fn(|_, _| mag * rng.random_range(-1.0..1.0));
        }
        for sc in s.scales.iter_mut().skip(1) {
            *sc *= 1.0 + mag * rng.random_range(-1.0..1.0);
        }
        s
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (g, gt) = synth_graph(3, 3, 4, 0.01, 4, SynthTopology::Full);
        let s = perturbed(&gt, 5, 0.05);
        let an = alignment_gradient(&s, &g).unwrap();
        let f = |st: &AlignmentState| alignment_residual(st, &g).unwrap();
        let h = 1e-5;
        let check = |a: f64, num: f64| {
            assert!(
                (a - num).abs() <= 1e-4 * a.abs().max(num.abs()).max(1e-3),
                "analytic {a} vs numeric {num}"
            );
        };
        for (v, px) in [(0usize, 0usize), (1, 5), (2, 11)] {
            let (mut p, mut m) = (s.clone(), s.clone());
            p.depths[v][px] += h;
            m.depths[v][px] -= h;
            check(an.depths[v][px], (f(&p) - f(&m)) / (2.0 * h));
        }
        for v in 0..3 {
            for i in 0..3 {
                let mut e = Vec3::zeros();
                e[i] = h;
                let (mut p, mut m) = (s.clone(), s.clone());
                p.poses[v].rotation = s.poses[v].rotation * exp_so3(&e);
                m.poses[v].rotation = s.poses[v].rotation * exp_so3(&-e);
                check(an.rotation[v][i], (f(&p) - f(&m)) / (2.0 * h));
                let (mut p, mut m) = (s.clone(), s.clone());
                p.poses[v].translation[i] += h;
                m.poses[v].translation[i] -= h;
                check(an.translation[v][i], (f(&p) - f(&m)) / (2.0 * h));
            }
        }
        for e in 0..3 {
            let (mut p, mut m) = (s.clone(), s.clone());
            p.scales[e] *= h.exp();
            m.scales[e] *= (-h).exp();
            check(an.log_scales[e], (f(&p) - f(&m)) / (2.0 * h));
        }
    }

    #[test]
    fn resection_recovers_pose_exactly() {
        let (g, gt) = synth_graph(3, 8, 8, 0.0, 7, SynthTopology::Full);
        let init = initialize_state(&g).unwrap();
        for v in 0..3 {
            assert!((init.poses[v].rotation - gt.poses[v].rotation).norm() < 1e-8);
            let dt = (init.poses[v].translation - gt.poses[v].translation).norm();
            assert!(dt < 1e-8, "view {v}: {dt}");
        }
        for (a, b) in init.scales.iter().zip(&gt.scales) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn recovers_from_perturbed_start() {
        let (g, gt) = synth_graph(3, 8, 8, 0.0, 8, SynthTopology::Ring);
        let start = perturbed(&gt, 9, 0.03);
        let res = global_align(&g, &AlignOptions { max_iters: 3000, ..Default::default() }, Some(start)).unwrap();
        for (dv, tv) in res.state.depths.iter().zip(&gt.depths) {
            for (d, t) in dv.iter().zip(tv) {
                assert!((d - t).abs() / t < 1e-3, "{d} vs {t}");
            }
        }
        assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stays_at_ground_truth() {
        let (g, gt) = synth_graph(3, 6, 6, 0.0, 3, SynthTopology::Ring);
        let r0 = alignment_residual(&gt, &g).unwrap();
        let res = global_align(&g, &AlignOptions::default(), Some(gt)).unwrap();
        assert!(*res.trace.last().unwrap() <= r0);
    }

    #[test]
    fn noisy_reaches_noise_floor() {
        let (g, gt) = synth_graph(3, 10, 10, 0.01, 12, SynthTopology::Ring);
        let floor = alignment_residual(&gt, &g).unwrap();
        let res = global_align(&g, &AlignOptions::default(), None).unwrap();
        let fin = *res.trace.last().unwrap();
        assert!(fin <= 1.05 * floor, "{fin} vs floor {floor}");
    }
}
