//! Human–object placement: contact detection, the proximity loss used when
//! a part is away from an object, the penetration loss used once it
//! touches, a placement optimizer, and the SP-3D penetration metric.

mod placement;

pub use placement::{
    align_placement, placement_loss, Placement, PlacementOptions, PlacementResult, PlacementState,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::body::{MotionSequence, Part, Skeleton};
use crate::geometry::Sdf;
use crate::math::{Pose, Vec3};

/// Keypoint-to-surface distance at or under which a body touches an object.
pub const CONTACT_THRESHOLD: f64 = 0.02;
/// Penetration tolerance for SP-3D.
pub const SP3D_EPS: f64 = 0.005;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("empty selection: {0}")]
    EmptySelection(&'static str),
    #[error("contact threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Body(#[from] crate::body::BodyError),
}

/// An object's signed distance field (in its own frame) and where it sits.
#[derive(Clone, Copy, Debug)]
pub struct PlacedObject<'a> {
    pub sdf: &'a Sdf,
    pub pose: Pose,
}

impl PlacedObject<'_> {
    pub fn signed_distance(&self, world: &Vec3) -> f64 {
        self.sdf.signed_distance(&self.pose.apply_inverse(world))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContactLabel {
    Contact,
    NonContact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactState {
    pub label: ContactLabel,
    pub closest_part: String,
    pub min_distance: f64,
}

/// Smallest keypoint signed distance; a tie with the threshold is contact.
pub fn detect_contact(
    keypoints: &[Vec3],
    skeleton: &Skeleton,
    object: &PlacedObject,
    threshold: f64,
) -> Result<ContactState, SceneError> {
    if !(threshold > 0.0) {
        return Err(SceneError::BadThreshold(threshold));
    }
    let (arg, min_distance) = keypoints
        .iter()
        .map(|k| object.signed_distance(k))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(SceneError::EmptySelection("keypoints"))?;
    let closest_part = skeleton
        .part_of(arg)
        .map(|p| p.name.clone())
        .unwrap_or_default();
    Ok(ContactState {
        label: if min_distance <= threshold {
            ContactLabel::Contact
        } else {
            ContactLabel::NonContact
        },
        closest_part,
        min_distance,
    })
}

/// The part whose keypoints have the smallest mean signed distance.
pub fn closest_part<'s>(
    keypoints: &[Vec3],
    skeleton: &'s Skeleton,
    object: &PlacedObject,
) -> Option<&'s Part> {
    skeleton
        .parts
        .iter()
        .filter(|p| !p.keypoints.is_empty())
        .map(|p| {
            let m = p
                .keypoints
                .iter()
                .map(|&k| object.signed_distance(&keypoints[k]))
                .sum::<f64>()
                / p.keypoints.len() as f64;
            (p, m)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p)
}

/// Mean distance from the part centroid to each object vertex, plus the
/// mean over object vertices of the distance to the nearest part keypoint.
pub fn non_contact_loss(part: &[Vec3], object_vertices: &[Vec3]) -> Result<f64, SceneError> {
    if part.is_empty() {
        return Err(SceneError::EmptySelection("body part"));
    }
    if object_vertices.is_empty() {
        return Err(SceneError::EmptySelection("object vertices"));
    }
    let centroid = part.iter().sum::<Vec3>() / part.len() as f64;
    let n_o = object_vertices.len() as f64;
    let first = object_vertices.iter().map(|v| (centroid - v).norm()).sum::<f64>() / n_o;
    let second = object_vertices
        .iter()
        .map(|v| {
            part.iter()
                .map(|k| (v - k).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / n_o;
    Ok(first + second)
}

/// Mean hinge penetration depth of the part keypoints.
pub fn contact_loss(part: &[Vec3], object: &PlacedObject) -> Result<f64, SceneError> {
    if part.is_empty() {
        return Err(SceneError::EmptySelection("body part"));
    }
    Ok(part
        .iter()
        .map(|k| (-object.signed_distance(k)).max(0.0))
        .sum::<f64>()
        / part.len() as f64)
}

/// Percentage of (frame, keypoint) pairs deeper than `eps` inside any object.
pub fn sp3d(motion: &MotionSequence, objects: &[PlacedObject], eps: f64) -> f64 {
    let mut total = 0usize;
    let mut inside = 0usize;
    for f in &motion.frames {
        for k in f {
            total += 1;
            if objects.iter().any(|o| o.signed_distance(k) < -eps) {
                inside += 1;
            }
        }
    }
    if total == 0 {
        return 0.0;
    }
    100.0 * inside as f64 / total as f64
}
