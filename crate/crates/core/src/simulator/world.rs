use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SimError, DEFAULT_DENSITY, DEFAULT_FRICTION, GRAVITY, MAX_SPEED};
use crate::body::MotionSequence;
use crate::geometry::{ConvexHull, MassProperties, Mesh};
use crate::math::{exp_so3, orthonormalize, Aabb, Mat3, Pose, Vec3};

/// Contacts are generated for features closer than this.
const MARGIN: f64 = 0.02;
/// Penetration of the kinematic human tolerated before pushing bodies out.
const HUMAN_SLOP: f64 = 0.005;
const HUMAN_PUSH_RATE: f64 = 0.2;
const HUMAN_PUSH_MAX: f64 = 0.5;
/// Approach speed below which restitution is ignored.
const BOUNCE_THRESHOLD: f64 = 0.5;
/// Faces this close to a vertex's deepest face compete for its contact normal.
const EDGE_TIE: f64 = 0.005;

fn default_friction() -> f64 {
    DEFAULT_FRICTION
}

/// Everything needed to put one rigid body into a [`World`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDesc {
    pub name: String,
    /// Render and mass geometry, in the body frame.
    pub mesh: Mesh,
    /// Convex collision pieces in the body frame; empty means the hull of `mesh`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pieces: Vec<Mesh>,
    pub pose: Pose,
    /// Defaults to the mesh volume at a wood-like density.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default = "default_friction")]
    pub friction: f64,
    #[serde(default)]
    pub restitution: f64,
    #[serde(default)]
    pub linear_velocity: Vec3,
    #[serde(default)]
    pub angular_velocity: Vec3,
}

impl BodyDesc {
    pub fn new(name: impl Into<String>, mesh: Mesh, pose: Pose) -> BodyDesc {
        BodyDesc {
            name: name.into(),
            mesh,
            pieces: Vec::new(),
            pose,
            mass: None,
            friction: DEFAULT_FRICTION,
            restitution: 0.0,
            linear_velocity: Vec3::zeros(),
            angular_velocity: Vec3::zeros(),
        }
    }
}

#[derive(Clone, Debug)]
struct Piece {
    hull: ConvexHull,
    aabb: Aabb,
}

#[derive(Clone, Debug)]
pub struct RigidBody {
    pub name: String,
    /// Body frame to world.
    pub pose: Pose,
    /// Velocity of the center of mass.
    pub linear_velocity: Vec3,
    /// World-frame angular velocity.
    pub angular_velocity: Vec3,
    pub mass: f64,
    pub friction: f64,
    pub restitution: f64,
    pub initial_pose: Pose,
    com_local: Vec3,
    inertia_local: Mat3,
    inv_inertia_local: Mat3,
    pieces: Vec<Piece>,
    aabb_local: Aabb,
}

impl RigidBody {
    pub fn from_desc(desc: &BodyDesc) -> Result<RigidBody, SimError> {
        let bad = |reason: &str| SimError::InvalidBody {
            name: desc.name.clone(),
            reason: reason.to_string(),
        };
        if !(desc.friction >= 0.0) {
            return Err(bad("friction must be non-negative"));
        }
        if !(0.0..=1.0).contains(&desc.restitution) {
            return Err(bad("restitution must lie in [0, 1]"));
        }
        let props = MassProperties::of(&desc.mesh)?;
        if !(props.volume > 0.0) {
            return Err(bad("mesh encloses no volume"));
        }
        let mass = desc.mass.unwrap_or(DEFAULT_DENSITY * props.volume);
        if !(mass > 0.0) {
            return Err(bad("mass must be positive"));
        }
        let inertia_local = props.inertia * (mass / props.volume);
        let inv_inertia_local = inertia_local
            .try_inverse()
            .ok_or_else(|| bad("singular inertia"))?;
        let sources: Vec<&Mesh> = if desc.pieces.is_empty() {
            vec![&desc.mesh]
        } else {
            desc.pieces.iter().collect()
        };
        let mut pieces = Vec::with_capacity(sources.len());
        let mut aabb_local = Aabb::empty();
        for m in sources {
            let hull = ConvexHull::from_mesh(m)?;
            let aabb = hull.aabb();
            aabb_local.grow(&aabb.min);
            aabb_local.grow(&aabb.max);
            pieces.push(Piece { hull, aabb });
        }
        let rot_err = crate::math::orthonormality_error(&desc.pose.rotation);
        if rot_err > 1e-8 {
            return Err(bad("pose rotation is not orthonormal"));
        }
        Ok(RigidBody {
            name: desc.name.clone(),
            pose: desc.pose,
            linear_velocity: desc.linear_velocity,
            angular_velocity: desc.angular_velocity,
            mass,
            friction: desc.friction,
            restitution: desc.restitution,
            initial_pose: desc.pose,
            com_local: props.center,
            inertia_local,
            inv_inertia_local,
            pieces,
            aabb_local,
        })
    }

    pub fn com(&self) -> Vec3 {
        self.pose.apply(&self.com_local)
    }

    pub fn com_local(&self) -> Vec3 {
        self.com_local
    }

    fn inv_inertia_world(&self) -> Mat3 {
        let r = self.pose.rotation;
        r * self.inv_inertia_local * r.transpose()
    }

    pub fn kinetic_energy(&self) -> f64 {
        let r = self.pose.rotation;
        let iw = r * self.inertia_local * r.transpose();
        0.5 * self.mass * self.linear_velocity.norm_squared()
            + 0.5 * self.angular_velocity.dot(&(iw * self.angular_velocity))
    }

    pub fn potential_energy(&self, g: f64) -> f64 {
        self.mass * g * self.com().z
    }

    pub fn world_aabb(&self) -> Aabb {
        let (a, b) = (self.aabb_local.min, self.aabb_local.max);
        let mut out = Aabb::empty();
        for i in 0..8 {
            let c = Vec3::new(
                if i & 1 == 0 { a.x } else { b.x },
                if i & 2 == 0 { a.y } else { b.y },
                if i & 4 == 0 { a.z } else { b.z },
            );
            out.grow(&self.pose.apply(&c));
        }
        out
    }

    /// Collision-proxy vertices in world coordinates.
    pub fn proxy_vertices(&self) -> Vec<Vec3> {
        self.pieces
            .iter()
            .flat_map(|p| p.hull.vertices.iter().map(|v| self.pose.apply(v)))
            .collect()
    }

    /// Signed distance from a world point to the nearest collision piece,
    /// with that piece's surface point and outward normal in world frame.
    pub fn proxy_distance(&self, world: &Vec3) -> (f64, Vec3, Vec3) {
        let local = self.pose.apply_inverse(world);
        let mut best = (f64::INFINITY, Vec3::zeros(), Vec3::z());
        for p in &self.pieces {
            let (d, q, n) = p.hull.signed_distance(&local);
            if d < best.0 {
                best = (d, q, n);
            }
        }
        (best.0, self.pose.apply(&best.1), self.pose.apply_vector(&best.2))
    }

    /// How deep `world` sits inside the collision pieces if the body were
    /// at `pose`; zero outside.
    pub fn penetration_at(&self, pose: &Pose, world: &Vec3) -> f64 {
        let local = pose.apply_inverse(world);
        self.pieces
            .iter()
            .filter(|p| p.aabb.contains(&local))
            .map(|p| -p.hull.max_plane_distance(&local).0)
            .fold(0.0, f64::max)
    }

    fn velocity_at(&self, r: &Vec3) -> Vec3 {
        self.linear_velocity + self.angular_velocity.cross(r)
    }
}

#[derive(Clone, Copy, Debug)]
struct SphereRef {
    a: usize,
    b: usize,
    frac: f64,
    radius: f64,
}

/// A human replayed from a motion: capsules sampled as spheres, moving on
/// their own schedule and pushing bodies without being pushed back.
#[derive(Clone, Debug)]
pub struct HumanDriver {
    pub motion: MotionSequence,
    /// Capsule-to-surface distance at or under which a body counts as touched.
    pub contact_tolerance: f64,
    spheres: Vec<SphereRef>,
}

impl HumanDriver {
    pub fn new(motion: MotionSequence) -> HumanDriver {
        let mut spheres = Vec::new();
        let rest = &motion.frames[0];
        for c in &motion.skeleton.capsules {
            let len = (rest[c.a] - rest[c.b]).norm();
            let n = ((len / c.radius).ceil() as usize + 1).max(2);
            for i in 0..n {
                spheres.push(SphereRef {
                    a: c.a,
                    b: c.b,
                    frac: i as f64 / (n - 1) as f64,
                    radius: c.radius,
                });
            }
        }
        HumanDriver {
            motion,
            contact_tolerance: 0.01,
            spheres,
        }
    }

    fn sphere_centers(&self, kps: &[Vec3]) -> Vec<Vec3> {
        self.spheres
            .iter()
            .map(|s| kps[s.a] * (1.0 - s.frac) + kps[s.b] * s.frac)
            .collect()
    }

    /// Smallest capsule-surface gap to each body at time `t`.
    pub fn gaps(&self, bodies: &[RigidBody], t: f64) -> Vec<f64> {
        let kps = self.motion.at_time(t);
        let centers = self.sphere_centers(&kps);
        bodies
            .iter()
            .map(|b| {
                let bb = b.world_aabb();
                self.spheres
                    .iter()
                    .zip(&centers)
                    .filter(|(s, c)| bb.distance(c) <= s.radius + MARGIN)
                    .map(|(s, c)| b.proxy_distance(c).0 - s.radius)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Other {
    Ground,
    Body(usize),
    Human(Vec3),
}

#[derive(Clone, Debug)]
struct Contact {
    a: usize,
    other: Other,
    /// Normal, then the two friction tangents.
    dirs: [Vec3; 3],
    ra: Vec3,
    rb: Vec3,
    /// `r × d` per direction, and its image under the inverse inertia.
    ca: [Vec3; 3],
    wa: [Vec3; 3],
    cb: [Vec3; 3],
    wb: [Vec3; 3],
    inv_ma: f64,
    inv_mb: f64,
    /// Effective mass inverse per direction.
    k: [f64; 3],
    mu: f64,
    target: f64,
    lambda: [f64; 3],
    /// Identifies the same feature pair across steps for warm starting.
    key: ContactKey,
}

impl Contact {
    fn body_b(&self) -> Option<usize> {
        match self.other {
            Other::Body(j) => Some(j),
            _ => None,
        }
    }

    /// Relative velocity along direction `d` from solver-local velocities.
    fn rel(&self, d: usize, vel: &[Vec3], ang: &[Vec3]) -> f64 {
        let mut v = self.dirs[d].dot(&vel[self.a]) + self.ca[d].dot(&ang[self.a]);
        match self.other {
            Other::Body(j) => v -= self.dirs[d].dot(&vel[j]) + self.cb[d].dot(&ang[j]),
            Other::Human(h) => v -= self.dirs[d].dot(&h),
            Other::Ground => {}
        }
        v
    }

    fn push(&self, d: usize, lambda: f64, vel: &mut [Vec3], ang: &mut [Vec3]) {
        vel[self.a] += self.dirs[d] * (lambda * self.inv_ma);
        ang[self.a] += self.wa[d] * lambda;
        if let Some(j) = self.body_b() {
            vel[j] -= self.dirs[d] * (lambda * self.inv_mb);
            ang[j] -= self.wb[d] * lambda;
        }
    }
}

type ContactKey = (usize, usize, usize, usize);

#[derive(Clone, Debug)]
pub struct World {
    pub bodies: Vec<RigidBody>,
    pub human: Option<HumanDriver>,
    pub time: f64,
    pub gravity: f64,
    pub ground_friction: f64,
    pub iterations: usize,
    /// Rescale velocities when a step without human contact would gain energy.
    pub energy_guard: bool,
    warm: BTreeMap<ContactKey, [f64; 3]>,
}

/// What one step observed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepInfo {
    /// Per body: did the human touch it within tolerance during this step.
    pub human_contact: Vec<bool>,
}

fn tangents(n: &Vec3) -> (Vec3, Vec3) {
    let a = if n.x.abs() < 0.57 { Vec3::x() } else { Vec3::y() };
    let t1 = n.cross(&a).normalize();
    (t1, n.cross(&t1))
}

impl World {
    pub fn new(descs: &[BodyDesc]) -> Result<World, SimError> {
        Ok(World {
            bodies: descs.iter().map(RigidBody::from_desc).collect::<Result<_, _>>()?,
            human: None,
            time: 0.0,
            gravity: GRAVITY,
            ground_friction: DEFAULT_FRICTION,
            iterations: 8,
            energy_guard: true,
            warm: BTreeMap::new(),
        })
    }

    pub fn with_human(mut self, motion: MotionSequence) -> World {
        self.human = Some(HumanDriver::new(motion));
        self
    }

    pub fn total_energy(&self) -> f64 {
        self.bodies
            .iter()
            .map(|b| b.kinetic_energy() + b.potential_energy(self.gravity))
            .sum()
    }

    fn make_contact(
        &self,
        inv_i: &[Mat3],
        a: usize,
        other: Other,
        point: Vec3,
        normal: Vec3,
        gap: f64,
        dt: f64,
    ) -> Contact {
        let ba = &self.bodies[a];
        let ra = point - ba.com();
        let (rb, mu_b, mass_b) = match other {
            Other::Body(j) => {
                let bj = &self.bodies[j];
                (point - bj.com(), bj.friction, Some(j))
            }
            Other::Ground => (Vec3::zeros(), self.ground_friction, None),
            Other::Human(_) => (Vec3::zeros(), DEFAULT_FRICTION, None),
        };
        let (t1, t2) = tangents(&normal);
        let dirs = [normal, t1, t2];
        let ca = dirs.map(|d| ra.cross(&d));
        let wa = ca.map(|c| inv_i[a] * c);
        let (cb, wb, inv_mb) = match mass_b {
            Some(j) => {
                let cb = dirs.map(|d| rb.cross(&d));
                (cb, cb.map(|c| inv_i[j] * c), 1.0 / self.bodies[j].mass)
            }
            None => ([Vec3::zeros(); 3], [Vec3::zeros(); 3], 0.0),
        };
        let inv_ma = 1.0 / ba.mass;
        let k = [0, 1, 2].map(|d| inv_ma + ca[d].dot(&wa[d]) + inv_mb + cb[d].dot(&wb[d]));
        let mut c = Contact {
            a,
            other,
            dirs,
            ra,
            rb,
            ca,
            wa,
            cb,
            wb,
            inv_ma,
            inv_mb,
            k,
            mu: (ba.friction * mu_b).sqrt(),
            target: 0.0,
            lambda: [0.0; 3],
            key: (a, 0, 0, 0),
        };
        let vn0 = self.relative_velocity(&c).dot(&normal);
        c.target = if gap > 0.0 {
            -gap / dt
        } else if matches!(other, Other::Human(_)) && -gap > HUMAN_SLOP {
            (HUMAN_PUSH_RATE * (-gap - HUMAN_SLOP) / dt).min(HUMAN_PUSH_MAX)
        } else {
            0.0
        };
        let e = match other {
            Other::Body(j) => ba.restitution.min(self.bodies[j].restitution),
            _ => ba.restitution,
        };
        if e > 0.0 && vn0 < -BOUNCE_THRESHOLD {
            c.target = c.target.max(-e * vn0);
        }
        c
    }

    fn relative_velocity(&self, c: &Contact) -> Vec3 {
        let va = self.bodies[c.a].velocity_at(&c.ra);
        let vb = match c.other {
            Other::Ground => Vec3::zeros(),
            Other::Body(j) => self.bodies[j].velocity_at(&c.rb),
            Other::Human(v) => v,
        };
        va - vb
    }

    fn collect_contacts(&self, inv_i: &[Mat3], dt: f64, info: &mut StepInfo) -> Vec<Contact> {
        let mut contacts = Vec::new();
        let boxes: Vec<Aabb> = self.bodies.iter().map(|b| b.world_aabb()).collect();
        for (i, b) in self.bodies.iter().enumerate() {
            if boxes[i].min.z >= MARGIN {
                continue;
            }
            for (pi, piece) in b.pieces.iter().enumerate() {
                for (vi, v) in piece.hull.vertices.iter().enumerate() {
                    let p = b.pose.apply(v);
                    if p.z < MARGIN {
                        let mut c = self.make_contact(inv_i, i, Other::Ground, p, Vec3::z(), p.z, dt);
                        c.key = (i, 0, pi, vi);
                        contacts.push(c);
                    }
                }
            }
        }
        for i in 0..self.bodies.len() {
            for j in 0..self.bodies.len() {
                if i == j || !boxes[i].inflated(MARGIN).overlaps(&boxes[j]) {
                    continue;
                }
                let (bi, bj) = (&self.bodies[i], &self.bodies[j]);
                let toward = bj.pose.rotation.transpose() * (bi.com() - bj.com());
                for (pi, piece) in bi.pieces.iter().enumerate() {
                    for (vi, v) in piece.hull.vertices.iter().enumerate() {
                        let p = bi.pose.apply(v);
                        if !boxes[j].inflated(MARGIN).contains(&p) {
                            continue;
                        }
                        let local = bj.pose.apply_inverse(&p);
                        for (pk, pj) in bj.pieces.iter().enumerate() {
                            if !pj.aabb.inflated(MARGIN).contains(&local) {
                                continue;
                            }
                            let (s_max, _) = pj.hull.max_plane_distance(&local);
                            if s_max >= MARGIN {
                                continue;
                            }
                            // a vertex on an edge is equally close to several faces;
                            // take the one facing the other body
                            let (s, n) = pj
                                .hull
                                .planes
                                .iter()
                                .map(|(n, d)| (n.dot(&local) - d, *n))
                                .filter(|(s, _)| *s >= s_max - EDGE_TIE)
                                .max_by(|a, b| a.1.dot(&toward).total_cmp(&b.1.dot(&toward)))
                                .unwrap_or((s_max, Vec3::z()));
                            let n = bj.pose.apply_vector(&n);
                            let mut c = self.make_contact(inv_i, i, Other::Body(j), p, n, s, dt);
                            c.key = (i, 1 + j, (pi << 20) | vi, pk);
                            contacts.push(c);
                        }
                    }
                }
            }
        }
        if let Some(h) = &self.human {
            let now = h.motion.at_time(self.time);
            let next = h.motion.at_time(self.time + dt);
            let c0 = h.sphere_centers(&now);
            let c1 = h.sphere_centers(&next);
            for (i, b) in self.bodies.iter().enumerate() {
                for (k, s) in h.spheres.iter().enumerate() {
                    if boxes[i].distance(&c0[k]) > s.radius + MARGIN {
                        continue;
                    }
                    let local = b.pose.apply_inverse(&c0[k]);
                    for (pi, piece) in b.pieces.iter().enumerate() {
                        if piece.aabb.distance(&local) > s.radius + MARGIN {
                            continue;
                        }
                        let (d, q, n) = piece.hull.signed_distance(&local);
                        let gap = d - s.radius;
                        if gap <= h.contact_tolerance {
                            info.human_contact[i] = true;
                        }
                        if gap < MARGIN {
                            let vel = (c1[k] - c0[k]) / dt;
                            let mut c = self.make_contact(
                                inv_i,
                                i,
                                Other::Human(vel),
                                b.pose.apply(&q),
                                -b.pose.apply_vector(&n),
                                gap,
                                dt,
                            );
                            c.key = (i, usize::MAX - k, pi, 0);
                            contacts.push(c);
                        }
                    }
                }
            }
        }
        contacts
    }

    /// Scales the velocities of bodies in contact by the largest `s <= 1`
    /// for which the energy after integration stays within `budget`.
    /// Spinning about the spin axis leaves kinetic energy unchanged, so only
    /// COM heights move; free bodies are exact and enter as a constant.
    fn limit_energy(&mut self, budget: f64, touched: &[bool], v_start: &[Vec3], dt: f64) {
        let g = self.gravity;
        let mut quad = 0.0;
        let mut lin = 0.0;
        let mut cst = 0.0;
        for (i, b) in self.bodies.iter().enumerate() {
            let w = b.mass * g;
            if touched[i] {
                quad += b.kinetic_energy();
                lin += w * dt * b.linear_velocity.z;
                cst += w * b.com().z;
            } else {
                let vz = 0.5 * (v_start[i].z + b.linear_velocity.z);
                cst += b.kinetic_energy() + w * (b.com().z + dt * vz);
            }
        }
        let c = cst - budget;
        if quad + lin + c <= 0.0 {
            return;
        }
        let s = if quad > 0.0 {
            let disc = (lin * lin - 4.0 * quad * c).max(0.0);
            ((-lin + disc.sqrt()) / (2.0 * quad)).clamp(0.0, 1.0)
        } else if lin > 0.0 {
            (-c / lin).clamp(0.0, 1.0)
        } else {
            0.0
        };
        for (b, _) in self.bodies.iter_mut().zip(touched).filter(|(_, t)| **t) {
            b.linear_velocity *= s;
            b.angular_velocity *= s;
        }
    }

    /// Advances by `dt`: gravity, contact impulses, then positions.
    pub fn step(&mut self, dt: f64) -> Result<StepInfo, SimError> {
        if !(dt > 0.0 && dt <= 1.0 / 60.0 + 1e-15) {
            return Err(SimError::BadTimeStep(dt));
        }
        let energy_before = self.total_energy();
        let mut info = StepInfo {
            human_contact: vec![false; self.bodies.len()],
        };
        let v_start: Vec<Vec3> = self.bodies.iter().map(|b| b.linear_velocity).collect();
        for b in &mut self.bodies {
            b.linear_velocity.z -= self.gravity * dt;
        }
        let inv_i: Vec<Mat3> = self.bodies.iter().map(|b| b.inv_inertia_world()).collect();
        let mut contacts = self.collect_contacts(&inv_i, dt, &mut info);
        let human_involved = contacts.iter().any(|c| matches!(c.other, Other::Human(_)));
        let mut vel: Vec<Vec3> = self.bodies.iter().map(|b| b.linear_velocity).collect();
        let mut ang: Vec<Vec3> = self.bodies.iter().map(|b| b.angular_velocity).collect();
        for c in contacts.iter_mut() {
            let Some(&[n, t1, t2]) = self.warm.get(&c.key) else {
                continue;
            };
            let limit = c.mu * n;
            c.lambda = [n, t1.clamp(-limit, limit), t2.clamp(-limit, limit)];
            for d in 0..3 {
                c.push(d, c.lambda[d], &mut vel, &mut ang);
            }
        }

        for _ in 0..self.iterations {
            for c in contacts.iter_mut() {
                let vn = c.rel(0, &vel, &ang);
                let new = (c.lambda[0] + (c.target - vn) / c.k[0]).max(0.0);
                c.push(0, new - c.lambda[0], &mut vel, &mut ang);
                c.lambda[0] = new;
            }
            for c in contacts.iter_mut() {
                let limit = c.mu * c.lambda[0];
                for d in 1..3 {
                    let v = c.rel(d, &vel, &ang);
                    let new = (c.lambda[d] - v / c.k[d]).clamp(-limit, limit);
                    c.push(d, new - c.lambda[d], &mut vel, &mut ang);
                    c.lambda[d] = new;
                }
            }
        }
        for (b, (v, w)) in self.bodies.iter_mut().zip(vel.into_iter().zip(ang)) {
            b.linear_velocity = v;
            b.angular_velocity = w;
        }

        self.warm = contacts
            .iter()
            .map(|c| (c.key, c.lambda))
            .collect();
        let mut touched = vec![false; self.bodies.len()];
        for c in &contacts {
            touched[c.a] = true;
            if let Other::Body(j) = c.other {
                touched[j] = true;
            }
        }
        if self.energy_guard && !human_involved {
            self.limit_energy(energy_before, &touched, &v_start, dt);
        }
        for (i, b) in self.bodies.iter_mut().enumerate() {
            // free bodies follow the exact parabola
            let v = if touched[i] {
                b.linear_velocity
            } else {
                0.5 * (v_start[i] + b.linear_velocity)
            };
            let com = b.com() + v * dt;
            let rot = orthonormalize(&(exp_so3(&(b.angular_velocity * dt)) * b.pose.rotation));
            b.pose = Pose::new(rot, com - rot * b.com_local);
        }
        self.time += dt;

        for (i, b) in self.bodies.iter().enumerate() {
            let speed = b.linear_velocity.norm();
            if !(speed <= MAX_SPEED) || !b.angular_velocity.iter().all(|w| w.is_finite()) {
                return Err(SimError::BlowUp {
                    body: i,
                    name: b.name.clone(),
                    speed,
                });
            }
        }
        Ok(info)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::DEFAULT_DT;

    fn cube_at(z: f64) -> BodyDesc {
        BodyDesc::new("cube", Mesh::unit_cube(), Pose::from_translation(Vec3::new(0.0, 0.0, z)))
    }

    #[test]
    fn resting_cube_stays_put() {
        let mut w = World::new(&[cube_at(0.5)]).unwrap();
        let before = w.bodies[0].pose;
        w.step(DEFAULT_DT).unwrap();
        let moved = (w.bodies[0].pose.translation - before.translation).norm();
        assert!(moved < 1e-6);
        for _ in 0..240 {
            w.step(DEFAULT_DT).unwrap();
        }
        assert!((w.bodies[0].pose.translation - before.translation).norm() < 1e-4);
    }

    #[test]
    fn ballistic_drop_matches_closed_form() {
        let z0 = 1.5;
        let mut w = World::new(&[cube_at(z0)]).unwrap();
        let n = (0.3 / DEFAULT_DT).round() as usize;
        for _ in 0..n {
            w.step(DEFAULT_DT).unwrap();
        }
        let t = n as f64 * DEFAULT_DT;
        let expect = z0 - 0.5 * GRAVITY * t * t;
        let got = w.bodies[0].com().z;
        assert!((got - expect).abs() / (z0 - expect) < 0.01, "{got} vs {expect}");
    }

    #[test]
    fn bad_dt_rejected() {
        let mut w = World::new(&[cube_at(0.5)]).unwrap();
        assert!(matches!(w.step(0.1), Err(SimError::BadTimeStep(_))));
        assert!(matches!(w.step(0.0), Err(SimError::BadTimeStep(_))));
    }

    #[test]
    fn invalid_bodies_rejected() {
        let mut d = cube_at(0.5);
        d.restitution = 1.5;
        assert!(World::new(&[d]).is_err());
        let mut d = cube_at(0.5);
        d.mass = Some(0.0);
        assert!(World::new(&[d]).is_err());
    }

    #[test]
    fn stacked_cubes_rest() {
        let top = BodyDesc::new("top", Mesh::unit_cube(), Pose::from_translation(Vec3::new(0.1, 0.0, 1.5)));
        let mut w = World::new(&[cube_at(0.5), top]).unwrap();
        for _ in 0..480 {
            w.step(DEFAULT_DT).unwrap();
        }
        let b = &w.bodies[1];
        assert!((b.com().z - 1.5).abs() < 5e-3, "{:?} {:?}", b.com(), b.linear_velocity);
        assert!(w.bodies[1].linear_velocity.norm() < 1e-2);
    }

    #[test]
    fn restitution_bounces() {
        let mut d = cube_at(1.0);
        d.restitution = 0.8;
        let mut w = World::new(&[d]).unwrap();
        let mut went_up = false;
        for _ in 0..240 {
            w.step(DEFAULT_DT).unwrap();
            went_up |= w.bodies[0].linear_velocity.z > 1.0;
        }
        assert!(went_up);
    }
}
