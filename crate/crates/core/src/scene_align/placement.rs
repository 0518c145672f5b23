use serde::{Deserialize, Serialize};

use super::{
    closest_part, contact_loss, detect_contact, non_contact_loss, ContactLabel, PlacedObject,
    SceneError, CONTACT_THRESHOLD,
};
use crate::body::MotionSequence;
use crate::geometry::Sdf;
use crate::math::{Pose, Vec3};

/// Yaw about `+z` followed by a translation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub yaw: f64,
    pub translation: Vec3,
}

impl Placement {
    pub fn pose(&self) -> Pose {
        Pose::from_yaw_translation(self.yaw, self.translation)
    }

    /// The same yaw taken about `pivot` instead of the origin.
    pub fn pose_about(&self, pivot: &Vec3) -> Pose {
        let r = Pose::from_yaw_translation(self.yaw, Vec3::zeros());
        Pose::new(r.rotation, pivot - r.rotation * pivot + self.translation)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementState {
    /// World pose of each object's mesh frame.
    pub objects: Vec<Placement>,
    /// Offset applied to the whole motion, yawing about the first root.
    pub human: Placement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementOptions {
    pub threshold: f64,
    pub max_iters: usize,
    /// Initial step length along the normalized gradient (meters or radians).
    pub step: f64,
    pub fd_step: f64,
    pub min_step: f64,
    /// Keep objects at their initial height so they cannot sink into the floor.
    pub lock_object_height: bool,
    pub optimize_human: bool,
    /// Evaluate every `frame_stride`-th frame (the last frame always counts).
    pub frame_stride: usize,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        PlacementOptions {
            threshold: CONTACT_THRESHOLD,
            max_iters: 200,
            step: 0.05,
            fd_step: 1e-3,
            min_step: 1e-6,
            lock_object_height: true,
            optimize_human: true,
            frame_stride: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlacementResult {
    pub state: PlacementState,
    /// Total loss at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub improved: bool,
}

struct Problem<'a> {
    motion: &'a MotionSequence,
    objects: &'a [&'a Sdf],
    frames: Vec<usize>,
    pivot: Vec3,
    threshold: f64,
}

impl<'a> Problem<'a> {
    fn new(motion: &'a MotionSequence, objects: &'a [&'a Sdf], frames: Vec<usize>, threshold: f64) -> Problem<'a> {
        Problem {
            motion,
            objects,
            frames,
            pivot: motion.frames[0][crate::body::kp::PELVIS],
            threshold,
        }
    }

    /// Whether object `o` should be touched at frame `f`: always when the
    /// motion names no contacts, otherwise only inside a span on `o`.
    fn expects_contact(&self, f: usize, o: usize) -> bool {
        let spans = &self.motion.contacts;
        spans.is_empty() || spans.iter().any(|c| c.object == o && c.active(f))
    }

    fn loss(&self, state: &PlacementState) -> f64 {
        let human = state.human.pose_about(&self.pivot);
        let placed: Vec<PlacedObject> = self
            .objects
            .iter()
            .zip(&state.objects)
            .map(|(sdf, p)| PlacedObject { sdf, pose: p.pose() })
            .collect();
        let sk = &self.motion.skeleton;
        let mut total = 0.0;
        for &fi in &self.frames {
            let kps: Vec<Vec3> = self.motion.frames[fi].iter().map(|p| human.apply(p)).collect();
            for (oi, obj) in placed.iter().enumerate() {
                let Ok(state) = detect_contact(&kps, sk, obj, self.threshold) else {
                    continue;
                };
                let Some(part) = closest_part(&kps, sk, obj) else {
                    continue;
                };
                let pts: Vec<Vec3> = part.keypoints.iter().map(|&k| kps[k]).collect();
                let l = match state.label {
                    ContactLabel::Contact => contact_loss(&pts, obj),
                    ContactLabel::NonContact if !self.expects_contact(fi, oi) => Ok(0.0),
                    ContactLabel::NonContact => {
                        let local: Vec<Vec3> = pts.iter().map(|p| obj.pose.apply_inverse(p)).collect();
                        non_contact_loss(&local, &obj.sdf.mesh().vertices)
                    }
                };
                total += l.unwrap_or(0.0);
            }
        }
        total / self.frames.len().max(1) as f64
    }
}

fn pack(s: &PlacementState) -> Vec<f64> {
    let mut v = Vec::with_capacity(4 * (s.objects.len() + 1));
    for p in s.objects.iter().chain(std::iter::once(&s.human)) {
        v.extend_from_slice(&[p.yaw, p.translation.x, p.translation.y, p.translation.z]);
    }
    v
}

fn unpack(v: &[f64]) -> PlacementState {
    let mut all: Vec<Placement> = v
        .chunks(4)
        .map(|c| Placement {
            yaw: c[0],
            translation: Vec3::new(c[1], c[2], c[3]),
        })
        .collect();
    let human = all.pop().unwrap_or_default();
    PlacementState { objects: all, human }
}

/// Descends the sum over objects of whichever loss each object's contact
/// state selects, averaged over frames. Out of contact, an object only
/// attracts the body on frames where the motion expects to touch it. Gradients are central differences;
/// a step is kept only if it lowers the total.
pub fn align_placement(
    motion: &MotionSequence,
    objects: &[&Sdf],
    init: &PlacementState,
    opts: &PlacementOptions,
) -> Result<PlacementResult, SceneError> {
    motion.validate()?;
    if !(opts.threshold > 0.0) {
        return Err(SceneError::BadThreshold(opts.threshold));
    }
    if init.objects.len() != objects.len() {
        return Err(SceneError::EmptySelection("one placement per object"));
    }
    let stride = opts.frame_stride.max(1);
    let mut frames: Vec<usize> = (0..motion.len()).step_by(stride).collect();
    if frames.last() != Some(&(motion.len() - 1)) {
        frames.push(motion.len() - 1);
    }
    let prob = Problem::new(motion, objects, frames, opts.threshold);
    let n_obj = objects.len();
    let free: Vec<bool> = (0..4 * (n_obj + 1))
        .map(|i| {
            let (body, dof) = (i / 4, i % 4);
            if body == n_obj {
                opts.optimize_human
            } else {
                !(opts.lock_object_height && dof == 3)
            }
        })
        .collect();

    let mut x = pack(init);
    let mut best = prob.loss(init);
    let mut trace = vec![best];
    let mut step = opts.step;
    let h = opts.fd_step;
    for _ in 0..opts.max_iters {
        if best <= 0.0 || step < opts.min_step {
            break;
        }
        let mut g = vec![0.0; x.len()];
        for i in (0..x.len()).filter(|&i| free[i]) {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            g[i] = (prob.loss(&unpack(&xp)) - prob.loss(&unpack(&xm))) / (2.0 * h);
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn == 0.0 {
            break;
        }
        loop {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi / gn).collect();
            let l = prob.loss(&unpack(&cand));
            if l < best {
                x = cand;
                best = l;
                trace.push(best);
                step *= 1.5;
                break;
            }
            step *= 0.5;
            if step < opts.min_step {
                break;
            }
        }
    }
    let improved = trace.len() > 1;
    Ok(PlacementResult {
        state: if improved { unpack(&x) } else { init.clone() },
        trace,
        improved,
    })
}

/// Loss of a placement under the same rules [`align_placement`] uses.
pub fn placement_loss(
    motion: &MotionSequence,
    objects: &[&Sdf],
    state: &PlacementState,
    threshold: f64,
) -> f64 {
    Problem::new(motion, objects, (0..motion.len()).collect(), threshold).loss(state)
}
