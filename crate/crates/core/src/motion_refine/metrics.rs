use nalgebra::{Matrix4, Quaternion, SymmetricEigen, UnitQuaternion};

use super::RefineError;
use crate::body::MotionSequence;
use crate::math::{Mat3, Vec3};

/// `q ≈ scale · rotation · p + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Similarity {
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }
}

fn check_dims(pred: &MotionSequence, reference: &MotionSequence) -> Result<(), RefineError> {
    if pred.frames.len() != reference.frames.len() {
        return Err(RefineError::DimensionMismatch(format!(
            "{} vs {} frames",
            pred.frames.len(),
            reference.frames.len()
        )));
    }
    for (i, (a, b)) in pred.frames.iter().zip(&reference.frames).enumerate() {
        if a.len() != b.len() {
            return Err(RefineError::DimensionMismatch(format!(
                "frame {i}: {} vs {} keypoints",
                a.len(),
                b.len()
            )));
        }
    }
    if pred.frames.is_empty() || pred.frames[0].is_empty() {
        return Err(RefineError::EmptySelection("keypoints"));
    }
    Ok(())
}

fn mean_error(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64
}

/// Mean keypoint error in world coordinates.
pub fn w_mpjpe(pred: &MotionSequence, reference: &MotionSequence) -> Result<f64, RefineError> {
    check_dims(pred, reference)?;
    let n = pred.frames.len() as f64;
    Ok(pred
        .frames
        .iter()
        .zip(&reference.frames)
        .map(|(a, b)| mean_error(a, b))
        .sum::<f64>()
        / n)
}

fn centered(p: &[Vec3]) -> (Vec3, Vec<Vec3>) {
    let c = p.iter().sum::<Vec3>() / p.len() as f64;
    (c, p.iter().map(|x| x - c).collect())
}

fn collinear(p: &[Vec3]) -> bool {
    let scatter: Mat3 = p.iter().map(|x| x * x.transpose()).sum();
    let mut ev: Vec<f64> = scatter.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    !(ev[0] > 0.0 && ev[1] > 1e-12 * ev[0])
}

/// Least-squares similarity taking `p` onto `q` (Horn's unit-quaternion
/// solution for the rotation). `None` when either set is collinear.
pub fn procrustes(p: &[Vec3], q: &[Vec3]) -> Option<Similarity> {
    if p.len() != q.len() || p.len() < 3 {
        return None;
    }
    let (cp, p0) = centered(p);
    let (cq, q0) = centered(q);
    if collinear(&p0) || collinear(&q0) {
        return None;
    }
    let s: Mat3 = p0.iter().zip(&q0).map(|(a, b)| a * b.transpose()).sum();
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    let n = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(n);
    let best = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(best);
    let rotation = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]))
        .to_rotation_matrix()
        .into_inner();
    let num: f64 = p0.iter().zip(&q0).map(|(a, b)| b.dot(&(rotation * a))).sum();
    let den: f64 = p0.iter().map(|a| a.norm_squared()).sum();
    let scale = num / den;
    Some(Similarity {
        scale,
        rotation,
        translation: cq - scale * (rotation * cp),
    })
}

/// Mean keypoint error after aligning each predicted frame onto the
/// reference frame with its own similarity transform.
pub fn pa_mpjpe(pred: &MotionSequence, reference: &MotionSequence) -> Result<f64, RefineError> {
    check_dims(pred, reference)?;
    let mut total = 0.0;
    for (i, (a, b)) in pred.frames.iter().zip(&reference.frames).enumerate() {
        let t = procrustes(a, b).ok_or(RefineError::DegenerateFrame(i))?;
        let aligned: Vec<Vec3> = a.iter().map(|p| t.apply(p)).collect();
        total += mean_error(&aligned, b);
    }
    Ok(total / pred.frames.len() as f64)
}
