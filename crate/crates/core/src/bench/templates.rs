//! Procedural furniture and templated motions with known contacts.

use serde::{Deserialize, Serialize};

use crate::body::{kp, posed, sitting_local, ContactSpan, MotionSequence, Skeleton, SEAT_MARKER_DROP};
use crate::geometry::Mesh;
use crate::math::{Pose, Vec3};
use crate::simulator::BodyDesc;

pub const TABLE_HEIGHT: f64 = 0.72;
const TABLE_TOP: f64 = 0.03;
const TABLE_HALF: (f64, f64) = (0.3, 0.6);
const TABLE_LEG: f64 = 0.025;
pub const FOOTREST_HEIGHT: f64 = 0.15;
const FOOTREST_HALF: (f64, f64) = (0.15, 0.22);

/// Pelvis placement ahead of the seat center, in the chair frame.
const PELVIS_AHEAD: f64 = 0.03;
/// Distance from the seat front edge to the near edge of the table.
const TABLE_GAP: f64 = 0.12;
const HAND_ON_TABLE: f64 = 0.1;
const WRIST_RADIUS: f64 = 0.04;
const ANKLE_RADIUS: f64 = 0.05;

/// A convex-piece object ready for the simulator.
#[derive(Clone, Debug)]
pub struct Furniture {
    pub mesh: Mesh,
    pub pieces: Vec<Mesh>,
}

impl Furniture {
    pub fn body(&self, name: &str, pose: Pose) -> BodyDesc {
        let mut d = BodyDesc::new(name, self.mesh.clone(), pose);
        d.pieces = self.pieces.clone();
        d
    }
}

/// Four-legged table, top at [`TABLE_HEIGHT`], origin on the floor under
/// its center.
pub fn table() -> Furniture {
    let (hx, hy) = TABLE_HALF;
    let leg_h = TABLE_HEIGHT - TABLE_TOP;
    let mut pieces = vec![Mesh::cuboid(
        "top",
        Vec3::new(0.0, 0.0, leg_h + 0.5 * TABLE_TOP),
        Vec3::new(hx, hy, 0.5 * TABLE_TOP),
    )];
    for (sx, sy) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
        pieces.push(Mesh::cuboid(
            "leg",
            Vec3::new(sx * (hx - 2.0 * TABLE_LEG), sy * (hy - 2.0 * TABLE_LEG), 0.5 * leg_h),
            Vec3::new(TABLE_LEG, TABLE_LEG, 0.5 * leg_h),
        ));
    }
    Furniture {
        mesh: Mesh::merge("table", &pieces),
        pieces,
    }
}

/// Low box for the feet.
pub fn footrest() -> Furniture {
    let (hx, hy) = FOOTREST_HALF;
    let m = Mesh::cuboid(
        "footrest",
        Vec3::new(0.0, 0.0, 0.5 * FOOTREST_HEIGHT),
        Vec3::new(hx, hy, 0.5 * FOOTREST_HEIGHT),
    );
    Furniture {
        mesh: m.clone(),
        pieces: vec![m],
    }
}

/// What the sitting template touches besides the seat.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SitExtras {
    /// Object index of a table whose top the hands rest on.
    pub table: Option<usize>,
    /// Object index of a footrest under the feet.
    pub footrest: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SitTemplate {
    pub fps: f64,
    pub duration: f64,
    /// Height the pelvis starts above its final position.
    pub descent: f64,
    /// Fraction of the motion spent descending.
    pub descent_fraction: f64,
    /// Final gap between the seat markers and the seat top; negative sinks
    /// the body into the seat.
    pub hover: f64,
}

impl Default for SitTemplate {
    fn default() -> Self {
        SitTemplate {
            fps: 30.0,
            duration: 1.0,
            descent: 0.15,
            descent_fraction: 0.4,
            hover: 0.0,
        }
    }
}

/// Where the table and footrest go for a chair at the origin facing `+x`.
pub fn table_offset(seat_depth: f64) -> Vec3 {
    Vec3::new(0.5 * seat_depth + TABLE_GAP + TABLE_HALF.0, 0.0, 0.0)
}

pub fn footrest_offset(seat_depth: f64) -> Vec3 {
    Vec3::new(0.5 * seat_depth + 0.28, 0.0, 0.0)
}

impl SitTemplate {
    /// A body lowering itself onto a seat whose top is `seat_top` above
    /// the floor, with the chair at `chair_pose` facing its local `+x`.
    /// The seat markers touch object `chair` from the end of the descent.
    pub fn motion(
        &self,
        chair_pose: &Pose,
        chair: usize,
        seat_top: f64,
        seat_depth: f64,
        extras: SitExtras,
    ) -> MotionSequence {
        let pelvis_z = seat_top + SEAT_MARKER_DROP + self.hover;
        let foot_floor = if extras.footrest.is_some() { FOOTREST_HEIGHT } else { 0.0 };
        let shin = (pelvis_z - 0.05 - foot_floor - ANKLE_RADIUS).max(0.05);
        let (reach, hand_height) = match extras.table {
            Some(_) => {
                let near = table_offset(seat_depth).x - TABLE_HALF.0;
                (
                    near + HAND_ON_TABLE - PELVIS_AHEAD - 0.22,
                    TABLE_HEIGHT + WRIST_RADIUS - pelvis_z,
                )
            }
            None => (0.0, 0.0),
        };
        let local = sitting_local(shin, reach, hand_height);
        let n = (self.duration * self.fps).round() as usize + 1;
        let settle_frame = ((n - 1) as f64 * self.descent_fraction).round() as usize;
        let frames: Vec<Vec<Vec3>> = (0..n)
            .map(|f| {
                let s = if settle_frame == 0 {
                    1.0
                } else {
                    (f as f64 / settle_frame as f64).min(1.0)
                };
                let ease = s * s * (3.0 - 2.0 * s);
                let lift = self.descent * (1.0 - ease);
                let root = Pose::from_translation(Vec3::new(PELVIS_AHEAD, 0.0, pelvis_z + lift));
                posed(&local, &chair_pose.compose(&root))
            })
            .collect();
        let span = |object, keypoints: &[usize]| ContactSpan {
            object,
            keypoints: keypoints.to_vec(),
            start: settle_frame,
            end: n,
        };
        let mut contacts = vec![span(chair, &[kp::L_SEAT, kp::R_SEAT])];
        if let Some(t) = extras.table {
            contacts.push(span(t, &[kp::L_WRIST, kp::R_WRIST]));
        }
        if let Some(r) = extras.footrest {
            contacts.push(span(r, &[kp::L_ANKLE, kp::R_ANKLE]));
        }
        MotionSequence {
            fps: self.fps,
            skeleton: Skeleton::standard(),
            frames,
            contacts,
        }
    }
}

/// A standing body walking into object `target` along `+x` of `pose` for
/// `duration` seconds, hands at `hand_height`.
pub fn push_motion(pose: &Pose, target: usize, start_x: f64, speed: f64, duration: f64, hand_height: f64) -> MotionSequence {
    let fps = 30.0;
    let n = (duration * fps).round() as usize + 1;
    let mut local = crate::body::standing_local();
    let pelvis_z = crate::body::STANDING_PELVIS_HEIGHT;
    for (wr, el) in [(kp::L_WRIST, kp::L_ELBOW), (kp::R_WRIST, kp::R_ELBOW)] {
        local[wr] = Vec3::new(0.45, local[wr].y, hand_height - pelvis_z);
        local[el] = Vec3::new(0.22, local[el].y, 0.5 * (hand_height - pelvis_z) + 0.15);
    }
    let frames = (0..n)
        .map(|f| {
            let x = start_x + speed * f as f64 / fps;
            posed(&local, &pose.compose(&Pose::from_translation(Vec3::new(x, 0.0, pelvis_z))))
        })
        .collect();
    MotionSequence {
        fps,
        skeleton: Skeleton::standard(),
        frames,
        contacts: vec![ContactSpan {
            object: target,
            keypoints: vec![kp::L_WRIST, kp::R_WRIST],
            start: 0,
            end: n,
        }],
    }
}
