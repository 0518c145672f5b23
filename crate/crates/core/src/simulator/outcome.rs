use serde::{Deserialize, Serialize};

use super::world::{BodyDesc, World};
use super::{SimError, DEFAULT_DT};
use crate::body::MotionSequence;
use crate::math::{rotation_angle_between, Pose};

/// Lone-object displacement bounds for the gravity check.
pub const GRAVITY_MAX_SHIFT: f64 = 0.02;
pub const GRAVITY_MAX_TURN: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SettleParams {
    pub dt: f64,
    pub t_max: f64,
    /// Rest thresholds on COM speed (m/s) and spin (rad/s).
    pub rest_speed: f64,
    pub rest_spin: f64,
    pub dwell: f64,
    pub record_trajectory: bool,
}

impl Default for SettleParams {
    fn default() -> Self {
        SettleParams {
            dt: DEFAULT_DT,
            t_max: 10.0,
            rest_speed: 0.01,
            rest_spin: 0.05,
            dwell: 0.5,
            record_trajectory: false,
        }
    }
}

impl SettleParams {
    pub fn dwell_steps(&self) -> usize {
        ((self.dwell / self.dt).round() as usize).max(1)
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt <= 1.0 / 60.0 + 1e-15) {
            return Err(SimError::BadTimeStep(self.dt));
        }
        if !(self.t_max >= self.dwell && self.dwell > 0.0) {
            return Err(SimError::BadParams(format!(
                "need 0 < dwell ({}) <= t_max ({})",
                self.dwell, self.t_max
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    /// COM travel, meters.
    pub distance: f64,
    /// Rotation from the initial orientation, radians.
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettleOutcome {
    pub stabilized: bool,
    /// Time at which the final rest window began, or the elapsed time when
    /// the run never came to rest.
    pub settle_time: f64,
    pub elapsed: f64,
    pub dt: f64,
    pub final_poses: Vec<Pose>,
    pub displacement: Vec<Displacement>,
    /// `contact_trace[body][step]`: human within tolerance of the body.
    pub contact_trace: Vec<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<Vec<Pose>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeType {
    /// Some object does not stand on its own under gravity.
    Type1,
    /// Objects fail to come to rest during the interaction.
    Type2,
    /// At rest, but without the intended contact at the end.
    Type3,
    /// At rest with persistent contact.
    Type4,
}

impl OutcomeType {
    pub fn label(self) -> u8 {
        u8::from(self == OutcomeType::Type4)
    }

    pub fn name(self) -> &'static str {
        match self {
            OutcomeType::Type1 => "type1",
            OutcomeType::Type2 => "type2",
            OutcomeType::Type3 => "type3",
            OutcomeType::Type4 => "type4",
        }
    }
}

/// Integrates until every body stays under the rest thresholds for the
/// dwell window (after the human motion has finished), or `t_max`.
pub fn settle(mut world: World, params: &SettleParams) -> Result<SettleOutcome, SimError> {
    params.validate()?;
    let dt = params.dt;
    let motion_end = world.human.as_ref().map_or(0.0, |h| h.motion.duration());
    let start: Vec<Pose> = world.bodies.iter().map(|b| b.pose).collect();
    let start_com: Vec<_> = world.bodies.iter().map(|b| b.com()).collect();
    let mut trace = vec![Vec::new(); world.bodies.len()];
    let mut trajectory = params.record_trajectory.then(Vec::new);
    let mut rest_start: Option<f64> = None;
    let mut stabilized = false;
    let max_steps = (params.t_max / dt).round() as usize;
    for _ in 0..max_steps {
        let info = world.step(dt)?;
        for (t, c) in trace.iter_mut().zip(&info.human_contact) {
            t.push(*c);
        }
        if let Some(tr) = trajectory.as_mut() {
            tr.push(world.bodies.iter().map(|b| b.pose).collect());
        }
        let resting = world.bodies.iter().all(|b| {
            b.linear_velocity.norm() < params.rest_speed && b.angular_velocity.norm() < params.rest_spin
        });
        if !resting {
            rest_start = None;
            continue;
        }
        let since = *rest_start.get_or_insert(world.time - dt);
        if world.time - since.max(motion_end) >= params.dwell - 1e-9 {
            stabilized = true;
            break;
        }
    }
    let displacement = world
        .bodies
        .iter()
        .zip(start.iter().zip(&start_com))
        .map(|(b, (p0, c0))| Displacement {
            distance: (b.com() - c0).norm(),
            angle: rotation_angle_between(&p0.rotation, &b.pose.rotation),
        })
        .collect();
    Ok(SettleOutcome {
        stabilized,
        settle_time: if stabilized {
            rest_start.unwrap_or(world.time)
        } else {
            world.time
        },
        elapsed: world.time,
        dt,
        final_poses: world.bodies.iter().map(|b| b.pose).collect(),
        displacement,
        contact_trace: trace,
        trajectory,
    })
}

/// Settles the object alone and checks that it neither moved nor turned.
pub fn gravity_stability(desc: &BodyDesc, params: &SettleParams) -> Result<bool, SimError> {
    let out = settle(World::new(std::slice::from_ref(desc))?, params)?;
    let d = out.displacement[0];
    Ok(out.stabilized && d.distance < GRAVITY_MAX_SHIFT && d.angle < GRAVITY_MAX_TURN)
}

/// Bodies, the human motion replayed against them, and the objects the
/// motion is meant to be touching when it ends.
#[derive(Clone, Debug)]
pub struct StabilityScenario {
    pub bodies: Vec<BodyDesc>,
    pub motion: Option<MotionSequence>,
    pub targets: Vec<usize>,
}

impl StabilityScenario {
    pub fn world(&self) -> Result<World, SimError> {
        let w = World::new(&self.bodies)?;
        Ok(match &self.motion {
            Some(m) => w.with_human(m.clone()),
            None => w,
        })
    }

    /// Contact targets, defaulting to the spans active on the last frame.
    pub fn with_default_targets(mut self) -> StabilityScenario {
        if self.targets.is_empty() {
            if let Some(m) = &self.motion {
                let last = m.len() - 1;
                let mut t: Vec<usize> = m
                    .contacts
                    .iter()
                    .filter(|c| c.active(last) || c.end >= m.len())
                    .map(|c| c.object)
                    .filter(|&o| o < self.bodies.len())
                    .collect();
                t.sort_unstable();
                t.dedup();
                self.targets = t;
            }
        }
        self
    }
}

/// Classifies from precomputed lone-object gravity verdicts. With no
/// targets, any object touched throughout the final window counts.
pub fn classify_with_gravity(
    gravity_ok: &[bool],
    outcome: &SettleOutcome,
    targets: &[usize],
    window: usize,
) -> OutcomeType {
    if gravity_ok.iter().any(|ok| !ok) {
        return OutcomeType::Type1;
    }
    if !outcome.stabilized {
        return OutcomeType::Type2;
    }
    let held = |b: usize| {
        let t = &outcome.contact_trace[b];
        t.len() >= window && t[t.len() - window..].iter().all(|&c| c)
    };
    let ok = if targets.is_empty() {
        (0..outcome.contact_trace.len()).any(held)
    } else {
        targets.iter().all(|&b| b < outcome.contact_trace.len() && held(b))
    };
    if ok {
        OutcomeType::Type4
    } else {
        OutcomeType::Type3
    }
}

pub fn classify_outcome(
    initial: &StabilityScenario,
    outcome: &SettleOutcome,
    params: &SettleParams,
) -> Result<OutcomeType, SimError> {
    let gravity: Vec<bool> = initial
        .bodies
        .iter()
        .map(|b| gravity_stability(b, params))
        .collect::<Result<_, _>>()?;
    Ok(classify_with_gravity(&gravity, outcome, &initial.targets, params.dwell_steps()))
}

/// 1 exactly when the scenario ends as [`OutcomeType::Type4`]. With
/// `gravity_only`, 1 when every object passes the lone gravity check.
pub fn stability_label(
    scenario: &StabilityScenario,
    params: &SettleParams,
    gravity_only: bool,
) -> Result<u8, SimError> {
    for b in &scenario.bodies {
        if !gravity_stability(b, params)? {
            return Ok(0);
        }
    }
    if gravity_only {
        return Ok(1);
    }
    let outcome = settle(scenario.world()?, params)?;
    let gravity = vec![true; scenario.bodies.len()];
    Ok(classify_with_gravity(&gravity, &outcome, &scenario.targets, params.dwell_steps()).label())
}
