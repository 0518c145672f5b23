//! Keypoint skeleton with capsule surface proxies, and motion sequences.
//!
//! Keypoints are world positions in meters, `+z` up.
//! Templates face `+x` with the body's left on `+y`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{Pose, Vec3};

#[derive(Debug, Error)]
pub enum BodyError {
    #[error("frame {frame} has {got} keypoints, expected {expected}")]
    KeypointCount {
        frame: usize,
        got: usize,
        expected: usize,
    },
    #[error("contact keypoint {0} out of range")]
    ContactIndex(usize),
    #[error("invalid skeleton: {0}")]
    Skeleton(String),
    #[error("motion has no frames")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Part {
    pub name: String,
    pub keypoints: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capsule {
    pub a: usize,
    pub b: usize,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skeleton {
    pub names: Vec<String>,
    pub parts: Vec<Part>,
    pub capsules: Vec<Capsule>,
}

pub mod kp {
    pub const PELVIS: usize = 0;
    pub const CHEST: usize = 1;
    pub const NECK: usize = 2;
    pub const HEAD: usize = 3;
    pub const L_SHOULDER: usize = 4;
    pub const L_ELBOW: usize = 5;
    pub const L_WRIST: usize = 6;
    pub const R_SHOULDER: usize = 7;
    pub const R_ELBOW: usize = 8;
    pub const R_WRIST: usize = 9;
    pub const L_HIP: usize = 10;
    pub const L_KNEE: usize = 11;
    pub const L_ANKLE: usize = 12;
    pub const R_HIP: usize = 13;
    pub const R_KNEE: usize = 14;
    pub const R_ANKLE: usize = 15;
    /// Skin markers on the underside of the pelvis, where a seat is touched.
    pub const L_SEAT: usize = 16;
    pub const R_SEAT: usize = 17;
    pub const COUNT: usize = 18;
}

/// Depth of the seat markers below the pelvis keypoint.
pub const SEAT_MARKER_DROP: f64 = 0.117;
/// Standing pelvis height above the ground.
pub const STANDING_PELVIS_HEIGHT: f64 = 0.93;

impl Skeleton {
    pub fn standard() -> Skeleton {
        let names = [
            "pelvis", "chest", "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
            "r_elbow", "r_wrist", "l_hip", "l_knee", "l_ankle", "r_hip", "r_knee", "r_ankle",
            "l_seat", "r_seat",
        ];
        use kp::*;
        let part = |name: &str, keypoints: &[usize]| Part {
            name: name.to_string(),
            keypoints: keypoints.to_vec(),
        };
        let cap = |a, b, radius| Capsule { a, b, radius };
        Skeleton {
            names: names.iter().map(|s| s.to_string()).collect(),
            parts: vec![
                part("head", &[NECK, HEAD]),
                part("torso", &[CHEST, L_SHOULDER, R_SHOULDER]),
                part("hands", &[L_ELBOW, L_WRIST, R_ELBOW, R_WRIST]),
                part("pelvis", &[PELVIS, L_HIP, R_HIP, L_SEAT, R_SEAT]),
                part("feet", &[L_KNEE, L_ANKLE, R_KNEE, R_ANKLE]),
            ],
            capsules: vec![
                cap(PELVIS, CHEST, 0.12),
                cap(CHEST, NECK, 0.1),
                cap(NECK, HEAD, 0.1),
                cap(CHEST, L_SHOULDER, 0.06),
                cap(CHEST, R_SHOULDER, 0.06),
                cap(L_SHOULDER, L_ELBOW, 0.045),
                cap(L_ELBOW, L_WRIST, 0.04),
                cap(R_SHOULDER, R_ELBOW, 0.045),
                cap(R_ELBOW, R_WRIST, 0.04),
                cap(L_HIP, R_HIP, 0.07),
                cap(L_HIP, L_KNEE, 0.07),
                cap(L_KNEE, L_ANKLE, 0.05),
                cap(R_HIP, R_KNEE, 0.07),
                cap(R_KNEE, R_ANKLE, 0.05),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn validate(&self) -> Result<(), BodyError> {
        let n = self.len();
        let mut owner = vec![0usize; n];
        for p in &self.parts {
            for &k in &p.keypoints {
                if k >= n {
                    return Err(BodyError::Skeleton(format!("part {} names keypoint {k}", p.name)));
                }
                owner[k] += 1;
            }
        }
        if let Some(k) = owner.iter().position(|&c| c != 1) {
            return Err(BodyError::Skeleton(format!(
                "keypoint {} belongs to {} parts",
                self.names[k], owner[k]
            )));
        }
        for c in &self.capsules {
            if c.a >= n || c.b >= n || !(c.radius > 0.0) {
                return Err(BodyError::Skeleton(format!("bad capsule {c:?}")));
            }
        }
        Ok(())
    }

    pub fn part(&self, name: &str) -> Option<&Part> {
        self.parts.iter().find(|p| p.name == name)
    }

    pub fn part_of(&self, keypoint: usize) -> Option<&Part> {
        self.parts.iter().find(|p| p.keypoints.contains(&keypoint))
    }
}

/// Standing pose, pelvis at the origin.
pub fn standing_local() -> Vec<Vec3> {
    use kp::*;
    let mut k = vec![Vec3::zeros(); COUNT];
    let h = STANDING_PELVIS_HEIGHT - 0.05;
    k[PELVIS] = Vec3::zeros();
    k[CHEST] = Vec3::new(0.0, 0.0, 0.3);
    k[NECK] = Vec3::new(0.0, 0.0, 0.5);
    k[HEAD] = Vec3::new(0.0, 0.0, 0.65);
    for (s, sh, el, wr, hip, kn, an, seat) in [
        (1.0, L_SHOULDER, L_ELBOW, L_WRIST, L_HIP, L_KNEE, L_ANKLE, L_SEAT),
        (-1.0, R_SHOULDER, R_ELBOW, R_WRIST, R_HIP, R_KNEE, R_ANKLE, R_SEAT),
    ] {
        k[sh] = Vec3::new(0.0, 0.18 * s, 0.45);
        k[el] = Vec3::new(0.0, 0.2 * s, 0.18);
        k[wr] = Vec3::new(0.02, 0.2 * s, -0.05);
        k[hip] = Vec3::new(0.0, 0.1 * s, -0.05);
        k[kn] = Vec3::new(0.02, 0.1 * s, -0.05 - 0.43);
        k[an] = Vec3::new(0.0, 0.1 * s, -h);
        k[seat] = Vec3::new(-0.02, 0.08 * s, -SEAT_MARKER_DROP);
    }
    k
}

/// Seated pose, pelvis at the origin, shins dropping `shin` meters from the
/// knees. `reach` moves the wrists forward and `hand_height` sets them
/// relative to the pelvis.
pub fn sitting_local(shin: f64, reach: f64, hand_height: f64) -> Vec<Vec3> {
    use kp::*;
    let mut k = vec![Vec3::zeros(); COUNT];
    k[PELVIS] = Vec3::zeros();
    k[CHEST] = Vec3::new(-0.04, 0.0, 0.3);
    k[NECK] = Vec3::new(-0.06, 0.0, 0.5);
    k[HEAD] = Vec3::new(-0.06, 0.0, 0.65);
    for (s, sh, el, wr, hip, kn, an, seat) in [
        (1.0, L_SHOULDER, L_ELBOW, L_WRIST, L_HIP, L_KNEE, L_ANKLE, L_SEAT),
        (-1.0, R_SHOULDER, R_ELBOW, R_WRIST, R_HIP, R_KNEE, R_ANKLE, R_SEAT),
    ] {
        k[sh] = Vec3::new(-0.05, 0.18 * s, 0.45);
        k[el] = Vec3::new(0.05 + 0.5 * reach, 0.22 * s, 0.25 + 0.4 * hand_height.min(0.2));
        k[wr] = Vec3::new(0.22 + reach, 0.2 * s, hand_height);
        k[hip] = Vec3::new(0.0, 0.1 * s, -0.05);
        k[kn] = Vec3::new(0.43, 0.1 * s, -0.05);
        k[an] = Vec3::new(0.45, 0.1 * s, -0.05 - shin);
        k[seat] = Vec3::new(-0.02, 0.08 * s, -SEAT_MARKER_DROP);
    }
    k
}

pub fn posed(local: &[Vec3], root: &Pose) -> Vec<Vec3> {
    local.iter().map(|p| root.apply(p)).collect()
}

/// Keypoints that must touch object `object` during frames `start..end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactSpan {
    pub object: usize,
    pub keypoints: Vec<usize>,
    pub start: usize,
    pub end: usize,
}

impl ContactSpan {
    pub fn active(&self, frame: usize) -> bool {
        (self.start..self.end).contains(&frame)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionSequence {
    pub fps: f64,
    pub skeleton: Skeleton,
    pub frames: Vec<Vec<Vec3>>,
    pub contacts: Vec<ContactSpan>,
}

impl MotionSequence {
    pub fn new(
        fps: f64,
        skeleton: Skeleton,
        frames: Vec<Vec<Vec3>>,
        contacts: Vec<ContactSpan>,
    ) -> Result<MotionSequence, BodyError> {
        let m = MotionSequence {
            fps,
            skeleton,
            frames,
            contacts,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), BodyError> {
        self.skeleton.validate()?;
        if self.frames.is_empty() {
            return Err(BodyError::Empty);
        }
        let n = self.skeleton.len();
        for (i, f) in self.frames.iter().enumerate() {
            if f.len() != n {
                return Err(BodyError::KeypointCount {
                    frame: i,
                    got: f.len(),
                    expected: n,
                });
            }
        }
        for c in &self.contacts {
            if let Some(&k) = c.keypoints.iter().find(|&&k| k >= n) {
                return Err(BodyError::ContactIndex(k));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.frames.len().saturating_sub(1)) as f64 / self.fps
    }

    pub fn root_trajectory(&self) -> Vec<Vec3> {
        self.frames.iter().map(|f| f[kp::PELVIS]).collect()
    }

    /// Keypoints at time `t`: linear between frames, last frame held.
    pub fn at_time(&self, t: f64) -> Vec<Vec3> {
        let x = (t * self.fps).max(0.0);
        let i = x.floor() as usize;
        if i + 1 >= self.frames.len() {
            return self.frames[self.frames.len() - 1].clone();
        }
        let w = x - i as f64;
        self.frames[i]
            .iter()
            .zip(&self.frames[i + 1])
            .map(|(a, b)| a * (1.0 - w) + b * w)
            .collect()
    }

    /// Contact keypoints active at `frame`, deduplicated and sorted.
    pub fn contact_keypoints(&self, frame: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .contacts
            .iter()
            .filter(|c| c.active(frame))
            .flat_map(|c| c.keypoints.iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn transformed(&self, pose: &Pose) -> MotionSequence {
        let mut m = self.clone();
        for f in &mut m.frames {
            for p in f.iter_mut() {
                *p = pose.apply(p);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_skeleton_is_valid() {
        let s = Skeleton::standard();
        s.validate().unwrap();
        assert_eq!(s.len(), kp::COUNT);
        assert_eq!(s.part_of(kp::L_SEAT).unwrap().name, "pelvis");
    }

    #[test]
    fn overlapping_parts_rejected() {
        let mut s = Skeleton::standard();
        s.parts[0].keypoints.push(kp::PELVIS);
        assert!(s.validate().is_err());
    }

    #[test]
    fn standing_feet_near_ground() {
        let k = posed(&standing_local(), &Pose::from_translation(Vec3::new(0.0, 0.0, STANDING_PELVIS_HEIGHT)));
        assert!((k[kp::L_ANKLE].z - 0.05).abs() < 1e-12);
    }

    #[test]
    fn interpolation_and_hold() {
        let s = Skeleton::standard();
        let a = standing_local();
        let b: Vec<Vec3> = a.iter().map(|p| p + Vec3::new(1.0, 0.0, 0.0)).collect();
        let m = MotionSequence::new(10.0, s, vec![a.clone(), b.clone()], vec![]).unwrap();
        let mid = m.at_time(0.05);
        assert!((mid[0].x - 0.5).abs() < 1e-12);
        assert_eq!(m.at_time(5.0), b);
        assert_eq!(m.at_time(-1.0), a);
    }

    #[test]
    fn contact_index_checked() {
        let s = Skeleton::standard();
        let err = MotionSequence::new(
            30.0,
            s,
            vec![standing_local()],
            vec![ContactSpan {
                object: 0,
                keypoints: vec![99],
                start: 0,
                end: 1,
            }],
        );
        assert!(matches!(err, Err(BodyError::ContactIndex(99))));
    }
}
