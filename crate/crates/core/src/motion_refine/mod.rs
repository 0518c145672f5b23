//! Motion refinement against a scene: the scene-targeted contact loss, the
//! center-point variant, a cross-entropy search over motion offsets with
//! the simulator in the loop, and world / Procrustes-aligned joint errors.

mod cem;
mod metrics;

pub use cem::{
    refine_motion, LossWeights, RefineMode, RefineParams, RefineResult, ScoreParts, Scorer,
};
pub use metrics::{pa_mpjpe, procrustes, w_mpjpe, Similarity};

use thiserror::Error;

use crate::geometry::{GeometryError, MassProperties, Mesh};
use crate::math::Vec3;
use crate::simulator::SimError;

#[derive(Debug, Error)]
pub enum RefineError {
    #[error("empty selection: {0}")]
    EmptySelection(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("frame {0} has collinear keypoints")]
    DegenerateFrame(usize),
    #[error("invalid refine parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Body(#[from] crate::body::BodyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Mean over contact keypoints and surface samples of the squared distance.
pub fn scene_targeted_loss(keypoints: &[Vec3], samples: &[Vec3]) -> Result<f64, RefineError> {
    if keypoints.is_empty() {
        return Err(RefineError::EmptySelection("contact keypoints"));
    }
    if samples.is_empty() {
        return Err(RefineError::EmptySelection("surface samples"));
    }
    // mean |k - s|^2 = |k - s̄|^2 + mean |s - s̄|^2, summed over k
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<Vec3>() / n;
    let spread = samples.iter().map(|s| (s - mean).norm_squared()).sum::<f64>() / n;
    let m = keypoints.len() as f64;
    Ok(keypoints.iter().map(|k| (k - mean).norm_squared()).sum::<f64>() / m + spread)
}

/// Squared distance from the contact-keypoint centroid to `center`.
pub fn center_point_loss_at(keypoints: &[Vec3], center: &Vec3) -> Result<f64, RefineError> {
    if keypoints.is_empty() {
        return Err(RefineError::EmptySelection("contact keypoints"));
    }
    let c = keypoints.iter().sum::<Vec3>() / keypoints.len() as f64;
    Ok((c - center).norm_squared())
}

/// [`center_point_loss_at`] the volume centroid of `object`.
pub fn center_point_loss(keypoints: &[Vec3], object: &Mesh) -> Result<f64, RefineError> {
    center_point_loss_at(keypoints, &MassProperties::of(object)?.center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_pts(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()) * 2.0 - Vec3::repeat(1.0))
            .collect()
    }

    #[test]
    fn scene_loss_closed_forms() {
        let p = Vec3::new(0.2, 0.1, -0.3);
        assert_eq!(scene_targeted_loss(&[p], &[p]).unwrap(), 0.0);
        let q = p + Vec3::new(0.0, 0.0, 0.25);
        assert!((scene_targeted_loss(&[p], &[q]).unwrap() - 0.0625).abs() < 1e-15);
        assert!(scene_targeted_loss(&[], &[q]).is_err());
        assert!(scene_targeted_loss(&[p], &[]).is_err());
    }

    #[test]
    fn scene_loss_matches_six_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = rand_pts(&mut rng, 2);
        let s = rand_pts(&mut rng, 3);
        let mut brute = 0.0;
        for a in &k {
            for b in &s {
                brute += (a - b).norm_squared();
            }
        }
        brute /= 6.0;
        assert!((scene_targeted_loss(&k, &s).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn center_loss_offsets() {
        let cube = Mesh::unit_cube();
        let k = [Vec3::new(0.1, 0.0, 0.0), Vec3::new(-0.1, 0.0, 0.0)];
        assert!(center_point_loss(&k, &cube).unwrap().abs() < 1e-24);
        let k = [Vec3::new(0.3, 0.0, 0.4)];
        assert!((center_point_loss(&k, &cube).unwrap() - 0.25).abs() < 1e-12);
        assert!(center_point_loss(&[], &cube).is_err());
    }
}
