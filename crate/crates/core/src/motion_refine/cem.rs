use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{center_point_loss_at, scene_targeted_loss, RefineError};
use crate::body::MotionSequence;
use crate::geometry::{sample_surface, SurfaceSamples};
use crate::math::{Pose, Vec3};
use crate::simulator::{BodyDesc, RigidBody, SimError, World, DEFAULT_DT};

/// Offsets per frame: root (3) then contact limb (3).
const DOF: usize = 6;
const KERNEL: [f64; 5] = [1.0, 2.0, 3.0, 2.0, 1.0];
/// Human-to-object gap under which a rollout has to start simulating.
const REACH: f64 = 0.05;
/// Minimum normal agreement for a sample to join the contact region.
const FACING: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineMode {
    /// Scene-targeted loss against local surface samples.
    Surface,
    /// Squared distance to the object's volume centroid.
    Center,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub track: f64,
    pub scene: f64,
    pub pen: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            track: 1.0,
            scene: 10.0,
            pen: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineParams {
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    /// Initial per-frame noise on root and contact-limb offsets (meters).
    pub sigma_root: f64,
    pub sigma_limb: f64,
    pub sigma_floor: f64,
    /// Share of the previous mean and spread kept at each refit.
    pub momentum: f64,
    /// Carry each iteration's elites into the next selection.
    pub keep_elites: bool,
    /// Frames between offset knots; offsets in between are interpolated.
    pub knot_stride: usize,
    pub weights: LossWeights,
    pub mode: RefineMode,
    /// Radius of the local contact region around the contact keypoints.
    pub region_radius: f64,
    pub surface_samples: usize,
    pub dt: f64,
    /// Roll candidates through the simulator; otherwise objects stay put.
    pub simulate: bool,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            population: 64,
            elite_fraction: 0.1,
            iterations: 30,
            sigma_root: 0.03,
            sigma_limb: 0.02,
            sigma_floor: 1e-3,
            momentum: 0.0,
            keep_elites: false,
            knot_stride: 5,
            weights: LossWeights::default(),
            mode: RefineMode::Surface,
            region_radius: 0.3,
            surface_samples: 512,
            dt: DEFAULT_DT,
            simulate: true,
        }
    }
}

impl RefineParams {
    fn validate(&self) -> Result<(), RefineError> {
        let bad = |m: &str| Err(RefineError::BadParams(m.to_string()));
        if self.population == 0 {
            return bad("population must be at least 1");
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return bad("elite fraction must lie in (0, 1]");
        }
        if self.knot_stride == 0 {
            return bad("knot stride must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.sigma_root > 0.0 && self.sigma_limb > 0.0 && self.sigma_floor > 0.0) {
            return bad("noise levels must be positive");
        }
        if !(self.region_radius > 0.0) || self.surface_samples == 0 {
            return bad("contact region needs a positive radius and samples");
        }
        Ok(())
    }

    pub fn elites(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).round() as usize).clamp(1, self.population)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreParts {
    /// Squared mean keypoint deviation from the input motion.
    pub track: f64,
    pub scene: f64,
    /// Mean keypoint penetration depth.
    pub pen: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct RefineResult {
    pub motion: MotionSequence,
    /// Best score before the first iteration and after each one.
    pub trace: Vec<f64>,
    pub input_score: ScoreParts,
    pub best_score: ScoreParts,
    /// Candidates dropped because their rollout blew up.
    pub discarded: usize,
}

/// Scores motions against a scene, rolling each through the simulator.
pub struct Scorer<'a> {
    reference: &'a MotionSequence,
    descs: &'a [BodyDesc],
    bodies: Vec<RigidBody>,
    /// `regions[frame][span]`: contact region in the object's frame.
    regions: Vec<Vec<Vec<Vec3>>>,
    params: &'a RefineParams,
}

impl<'a> Scorer<'a> {
    pub fn new(
        reference: &'a MotionSequence,
        descs: &'a [BodyDesc],
        params: &'a RefineParams,
    ) -> Result<Scorer<'a>, RefineError> {
        reference.validate()?;
        params.validate()?;
        let bodies = World::new(descs)?.bodies;
        let samples = descs
            .iter()
            .enumerate()
            .map(|(i, d)| Ok(sample_surface(&d.mesh, params.surface_samples, i as u64)?))
            .collect::<Result<Vec<_>, RefineError>>()?;
        let regions = (0..reference.len())
            .map(|f| {
                reference
                    .contacts
                    .iter()
                    .map(|span| {
                        if !span.active(f) || span.object >= descs.len() || span.keypoints.is_empty() {
                            return Vec::new();
                        }
                        let kps = &reference.frames[f];
                        let c = span.keypoints.iter().map(|&k| kps[k]).sum::<Vec3>() / span.keypoints.len() as f64;
                        Self::contact_region(&samples[span.object], &descs[span.object].pose, &c, params.region_radius)
                    })
                    .collect()
            })
            .collect();
        Ok(Scorer {
            reference,
            descs,
            bodies,
            regions,
            params,
        })
    }

    /// Object poses at each frame time. Simulation starts at the first
    /// frame where the human comes within reach of an object; before
    /// that the objects are assumed at rest.
    pub fn rollout(&self, motion: &MotionSequence) -> Result<Vec<Vec<Pose>>, SimError> {
        let initial: Vec<Pose> = self.descs.iter().map(|d| d.pose).collect();
        let n = motion.len();
        if !self.params.simulate || self.descs.is_empty() {
            return Ok(vec![initial; n]);
        }
        let mut world = World::new(self.descs)?.with_human(motion.clone());
        let start = {
            let human = world.human.as_ref().expect("human was just attached");
            (0..n).find(|&f| {
                let step = if f + 1 < n {
                    motion.frames[f]
                        .iter()
                        .zip(&motion.frames[f + 1])
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0, f64::max)
                } else {
                    0.0
                };
                let gap = human
                    .gaps(&world.bodies, f as f64 / motion.fps)
                    .into_iter()
                    .fold(f64::INFINITY, f64::min);
                gap - step < REACH
            })
        };
        let Some(start) = start else {
            return Ok(vec![initial; n]);
        };
        let mut out = vec![initial; start];
        world.time = start as f64 / motion.fps;
        out.push(world.bodies.iter().map(|b| b.pose).collect());
        for f in start + 1..n {
            let t = f as f64 / motion.fps;
            while world.time < t - 1e-9 {
                world.step(self.params.dt)?;
            }
            out.push(world.bodies.iter().map(|b| b.pose).collect());
        }
        Ok(out)
    }

    /// Samples of `object` (body frame) within the region radius of
    /// `centroid` that face the same way as the sample nearest to it: the
    /// patch of surface the keypoints are meant to rest on.
    fn contact_region(samples: &SurfaceSamples, pose: &Pose, centroid: &Vec3, radius: f64) -> Vec<Vec3> {
        let local = pose.apply_inverse(centroid);
        let d2: Vec<f64> = samples.points.iter().map(|p| (p - local).norm_squared()).collect();
        let nearest = (0..d2.len()).min_by(|&a, &b| d2[a].total_cmp(&d2[b]).then(a.cmp(&b)));
        let Some(nearest) = nearest else {
            return Vec::new();
        };
        let facing = samples.normals[nearest];
        let pick = |near: bool| -> Vec<Vec3> {
            (0..d2.len())
                .filter(|&i| samples.normals[i].dot(&facing) >= FACING && (!near || d2[i] <= radius * radius))
                .map(|i| samples.points[i])
                .collect()
        };
        let region = pick(true);
        if region.is_empty() {
            pick(false)
        } else {
            region
        }
    }

    pub fn score(&self, motion: &MotionSequence) -> Result<ScoreParts, SimError> {
        let poses = self.rollout(motion)?;
        Ok(self.score_with_poses(motion, &poses))
    }

    pub fn score_with_poses(&self, motion: &MotionSequence, poses: &[Vec<Pose>]) -> ScoreParts {
        let w = &self.params.weights;
        let n = motion.len() as f64;
        let k = motion.frames[0].len() as f64;
        let dev = motion
            .frames
            .iter()
            .zip(&self.reference.frames)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q).norm()))
            .sum::<f64>()
            / (n * k);
        let track = dev * dev;

        let mut pen = 0.0;
        let mut scene = 0.0;
        let mut scene_frames = 0usize;
        for (f, kps) in motion.frames.iter().enumerate() {
            let at = &poses[f];
            pen += kps
                .iter()
                .map(|p| {
                    self.bodies
                        .iter()
                        .zip(at)
                        .map(|(b, pose)| b.penetration_at(pose, p))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / k;
            let mut frame_scene = 0.0;
            let mut active = false;
            for (si, span) in motion.contacts.iter().enumerate().filter(|(_, c)| c.active(f)) {
                if span.object >= self.bodies.len() || span.keypoints.is_empty() {
                    continue;
                }
                active = true;
                let pts: Vec<Vec3> = span.keypoints.iter().map(|&i| kps[i]).collect();
                let pose = &at[span.object];
                frame_scene += match self.params.mode {
                    RefineMode::Surface => {
                        let region: Vec<Vec3> = self.regions[f][si].iter().map(|p| pose.apply(p)).collect();
                        scene_targeted_loss(&pts, &region).unwrap_or(0.0)
                    }
                    RefineMode::Center => {
                        let c = pose.apply(&self.bodies[span.object].com_local());
                        center_point_loss_at(&pts, &c).unwrap_or(0.0)
                    }
                };
            }
            if active {
                scene += frame_scene;
                scene_frames += 1;
            }
        }
        pen /= n;
        if scene_frames > 0 {
            scene /= scene_frames as f64;
        }
        ScoreParts {
            track,
            scene,
            pen,
            total: w.track * track + w.scene * scene + w.pen * pen,
        }
    }
}

/// Keypoints moved by the contact-limb offset at each frame: every part
/// that holds an active contact keypoint.
fn limb_sets(motion: &MotionSequence) -> Vec<Vec<usize>> {
    (0..motion.len())
        .map(|f| {
            let mut set = Vec::new();
            for k in motion.contact_keypoints(f) {
                match motion.skeleton.part_of(k) {
                    Some(p) => set.extend_from_slice(&p.keypoints),
                    None => set.push(k),
                }
            }
            set.sort_unstable();
            set.dedup();
            set
        })
        .collect()
}

/// Knot frames: every `stride`-th frame plus the last one.
fn knot_frames(frames: usize, stride: usize) -> Vec<usize> {
    let mut k: Vec<usize> = (0..frames).step_by(stride).collect();
    if k.last() != Some(&(frames - 1)) {
        k.push(frames - 1);
    }
    k
}

/// Per-frame offset at `f`, linear between the surrounding knots.
fn offset_at(knots: &[usize], theta: &[f64], f: usize) -> [f64; DOF] {
    let j = knots.partition_point(|&k| k <= f).saturating_sub(1);
    let mut o = [0.0; DOF];
    if j + 1 >= knots.len() {
        o.copy_from_slice(&theta[DOF * j..DOF * (j + 1)]);
        return o;
    }
    let t = (f - knots[j]) as f64 / (knots[j + 1] - knots[j]) as f64;
    for (d, v) in o.iter_mut().enumerate() {
        *v = (1.0 - t) * theta[DOF * j + d] + t * theta[DOF * (j + 1) + d];
    }
    o
}

fn apply_offsets(motion: &MotionSequence, limbs: &[Vec<usize>], knots: &[usize], theta: &[f64]) -> MotionSequence {
    let mut out = motion.clone();
    for (f, frame) in out.frames.iter_mut().enumerate() {
        let o = offset_at(knots, theta, f);
        let root = Vec3::new(o[0], o[1], o[2]);
        let limb = Vec3::new(o[3], o[4], o[5]);
        for p in frame.iter_mut() {
            *p += root;
        }
        for &k in &limbs[f] {
            frame[k] += limb;
        }
    }
    out
}

/// Standard normal noise per frame and DOF, smoothed along time with a
/// 5-tap triangular kernel (renormalized at the ends).
fn smooth_noise(rng: &mut ChaCha8Rng, frames: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..frames * DOF).map(|_| StandardNormal.sample(rng)).collect();
    let mut out = vec![0.0; raw.len()];
    for d in 0..DOF {
        for f in 0..frames {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for (j, w) in KERNEL.iter().enumerate() {
                let g = f as isize + j as isize - 2;
                if g >= 0 && (g as usize) < frames {
                    acc += w * raw[DOF * g as usize + d];
                    wsum += w;
                }
            }
            out[DOF * f + d] = acc / wsum;
        }
    }
    out
}

/// Cross-entropy search over root and contact-limb offsets at knot frames.
/// Every candidate is rolled through the simulator and scored; the
/// returned motion is the best candidate seen, the input included.
pub fn refine_motion(
    motion: &MotionSequence,
    bodies: &[BodyDesc],
    params: &RefineParams,
    seed: u64,
) -> Result<RefineResult, RefineError> {
    let scorer = Scorer::new(motion, bodies, params)?;
    let knots = knot_frames(motion.len(), params.knot_stride);
    let dim = knots.len() * DOF;
    let limbs = limb_sets(motion);

    let blown = ScoreParts {
        total: f64::INFINITY,
        ..ScoreParts::default()
    };
    let input_score = scorer.score(motion).unwrap_or(blown);
    let mut best_theta = vec![0.0; dim];
    let mut best = input_score;
    let mut trace = vec![best.total];
    let mut discarded = 0;

    let mut mu = vec![0.0; dim];
    let mut sigma: Vec<f64> = (0..dim)
        .map(|i| if i % DOF < 3 { params.sigma_root } else { params.sigma_limb })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_elite = params.elites();

    let mut kept: Vec<(Vec<f64>, ScoreParts)> = Vec::new();

    for _ in 0..params.iterations {
        let fresh: Vec<Vec<f64>> = (0..params.population)
            .map(|c| {
                if c == 0 {
                    return mu.clone();
                }
                let e = smooth_noise(&mut rng, knots.len());
                mu.iter().zip(&sigma).zip(&e).map(|((m, s), z)| m + s * z).collect()
            })
            .collect();
        let scores: Vec<Option<ScoreParts>> = fresh
            .par_iter()
            .map(|theta| scorer.score(&apply_offsets(motion, &limbs, &knots, theta)).ok())
            .collect();
        discarded += scores.iter().filter(|s| s.is_none()).count();
        let mut pool: Vec<(Vec<f64>, ScoreParts)> = fresh
            .into_iter()
            .zip(scores)
            .filter_map(|(t, s)| s.map(|s| (t, s)))
            .collect();
        pool.append(&mut kept);
        if pool.is_empty() {
            trace.push(best.total);
            continue;
        }
        // stable sort: ties keep fresh candidates first, in draw order
        pool.sort_by(|a, b| a.1.total.total_cmp(&b.1.total));
        if pool[0].1.total < best.total {
            best = pool[0].1;
            best_theta = pool[0].0.clone();
        }
        trace.push(best.total);

        pool.truncate(n_elite);
        let m = pool.len() as f64;
        let a = params.momentum;
        for i in 0..dim {
            let mean = pool.iter().map(|(t, _)| t[i]).sum::<f64>() / m;
            let var = pool.iter().map(|(t, _)| (t[i] - mean).powi(2)).sum::<f64>() / m;
            mu[i] = a * mu[i] + (1.0 - a) * mean;
            sigma[i] = (a * sigma[i] + (1.0 - a) * var.sqrt()).max(params.sigma_floor);
        }
        if params.keep_elites {
            kept = pool;
        }
    }

    Ok(RefineResult {
        motion: apply_offsets(motion, &limbs, &knots, &best_theta),
        trace,
        input_score,
        best_score: best,
        discarded,
    })
}
