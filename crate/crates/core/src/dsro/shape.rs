use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::geometry::Mesh;
use crate::math::{rot_y, Pose, Vec3};
use crate::simulator::BodyDesc;

/// Length of a chair parameter vector.
pub const D: usize = 11;

pub const SEAT_WIDTH: usize = 0;
pub const SEAT_DEPTH: usize = 1;
pub const SEAT_HEIGHT: usize = 2;
pub const SEAT_THICKNESS: usize = 3;
pub const LEG_WIDTH: usize = 4;
pub const BACK_HEIGHT: usize = 5;
pub const SEAT_TILT: usize = 6;
/// Presence logits, in the order front-left, front-right, back-left,
/// back-right (front is `+x`, left is `+y`).
pub const LEG_LOGITS: [usize; 4] = [7, 8, 9, 10];

/// Decoded value of a continuous coordinate is `BASE + SCALE * x`.
const BASE: [f64; 7] = [0.45, 0.45, 0.45, 0.04, 0.04, 0.40, 0.0];
const SCALE: [f64; 7] = [0.03, 0.03, 0.03, 0.005, 0.005, 0.05, 0.03];

/// Seat height of the canonical chair and its per-unit step.
pub const SEAT_HEIGHT_BASE: f64 = BASE[SEAT_HEIGHT];
pub const SEAT_HEIGHT_SCALE: f64 = SCALE[SEAT_HEIGHT];

pub const MIN_DIM: f64 = 0.01;
pub const MAX_DIM: f64 = 3.0;
const MAX_TILT: f64 = 0.3;

/// Standardized chair parameters: seven shape coordinates (zero is the
/// canonical chair) and four raw leg-presence logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ShapeParam(pub Vec<f64>);

/// Physical dimensions after clamping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChairDims {
    pub seat_width: f64,
    pub seat_depth: f64,
    pub seat_height: f64,
    pub seat_thickness: f64,
    pub leg_width: f64,
    pub back_height: f64,
    pub seat_tilt: f64,
    pub legs: [bool; 4],
}

/// A decoded chair: one convex box per part, merged into one mesh.
#[derive(Clone, Debug)]
pub struct Chair {
    pub dims: ChairDims,
    pub mesh: Mesh,
    pub pieces: Vec<Mesh>,
}

impl Chair {
    pub fn body(&self, name: &str, pose: Pose) -> BodyDesc {
        let mut d = BodyDesc::new(name, self.mesh.clone(), pose);
        d.pieces = self.pieces.clone();
        d
    }

    /// World height of the seat top at the seat center.
    pub fn seat_top(&self) -> f64 {
        self.dims.seat_height
    }
}

impl ShapeParam {
    pub fn canonical() -> ShapeParam {
        let mut x = vec![0.0; D];
        for i in LEG_LOGITS {
            x[i] = 1.0;
        }
        ShapeParam(x)
    }

    pub fn is_valid(&self) -> bool {
        self.0.len() == D && self.0.iter().all(|v| v.is_finite())
    }

    pub fn dims(&self) -> ChairDims {
        let x = |i: usize| {
            let v = self.0.get(i).copied().unwrap_or(0.0);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        let dim = |i: usize| (BASE[i] + SCALE[i] * x(i)).clamp(MIN_DIM, MAX_DIM);
        ChairDims {
            seat_width: dim(SEAT_WIDTH),
            seat_depth: dim(SEAT_DEPTH),
            seat_height: dim(SEAT_HEIGHT).max(dim(SEAT_THICKNESS) + MIN_DIM),
            seat_thickness: dim(SEAT_THICKNESS),
            leg_width: dim(LEG_WIDTH).min(0.5 * dim(SEAT_WIDTH).min(dim(SEAT_DEPTH))).max(MIN_DIM),
            back_height: dim(BACK_HEIGHT),
            seat_tilt: (BASE[SEAT_TILT] + SCALE[SEAT_TILT] * x(SEAT_TILT)).clamp(-MAX_TILT, MAX_TILT),
            legs: LEG_LOGITS.map(|i| x(i) >= 0.0),
        }
    }

    /// Builds the chair. Legs run from the floor to the underside of the
    /// (possibly tilted) seat; a negative logit drops that leg.
    pub fn decode(&self) -> Chair {
        let d = self.dims();
        let (w, dp, h, t, lw) = (d.seat_width, d.seat_depth, d.seat_height, d.seat_thickness, d.leg_width);
        let center = Vec3::new(0.0, 0.0, h - 0.5 * t);
        let tilt = Pose::new(rot_y(d.seat_tilt), center);
        let seat = Mesh::cuboid("seat", Vec3::zeros(), Vec3::new(0.5 * dp, 0.5 * w, 0.5 * t)).transformed(&tilt);
        let back = Mesh::cuboid(
            "back",
            Vec3::new(-0.5 * dp + 0.5 * t, 0.0, 0.5 * t + 0.5 * d.back_height),
            Vec3::new(0.5 * t, 0.5 * w, 0.5 * d.back_height),
        )
        .transformed(&tilt);
        let mut pieces = vec![seat, back];
        // underside plane of the seat
        let n = tilt.rotation * Vec3::z();
        let p0 = tilt.apply(&Vec3::new(0.0, 0.0, -0.5 * t));
        let names = ["leg_fl", "leg_fr", "leg_bl", "leg_br"];
        let signs = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
        for ((name, (sx, sy)), present) in names.iter().zip(signs).zip(d.legs) {
            if !present {
                continue;
            }
            let x = sx * (0.5 * dp - 0.5 * lw);
            let y = sy * (0.5 * w - 0.5 * lw);
            let top = p0.z - (n.x * (x - p0.x) + n.y * (y - p0.y)) / n.z;
            let len = top.clamp(MIN_DIM, MAX_DIM);
            pieces.push(Mesh::cuboid(
                *name,
                Vec3::new(x, y, 0.5 * len),
                Vec3::new(0.5 * lw, 0.5 * lw, 0.5 * len),
            ));
        }
        Chair {
            dims: d,
            mesh: Mesh::merge("chair", &pieces),
            pieces,
        }
    }

    /// Quantized key (1e-3 in parameter units) for label caching.
    pub fn cache_key(&self) -> Vec<i64> {
        self.0.iter().map(|v| (v * 1e3).round() as i64).collect()
    }

    /// The cell center a [`ShapeParam::cache_key`] stands for.
    pub fn from_key(key: &[i64]) -> ShapeParam {
        ShapeParam(key.iter().map(|&k| k as f64 * 1e-3).collect())
    }
}

/// Gaussian family over [`ShapeParam`], optionally shifted by a target
/// seat height.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeFamily {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ShapeFamily {
    /// Shape noise around the canonical chair with every leg present.
    pub fn stable() -> ShapeFamily {
        let mut f = ShapeFamily::mixed();
        for i in LEG_LOGITS {
            f.mean[i] = 1.5;
            f.std[i] = 0.3;
        }
        f
    }

    /// Leg logits near zero, so roughly half the chairs miss a leg that
    /// matters.
    pub fn mixed() -> ShapeFamily {
        let mut mean = vec![0.0; D];
        let mut std = vec![1.0; D];
        for i in LEG_LOGITS {
            mean[i] = 0.3;
            std[i] = 0.5;
        }
        ShapeFamily { mean, std }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, target_seat_height: Option<f64>) -> ShapeParam {
        let mut x: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect();
        if let Some(h) = target_seat_height {
            x[SEAT_HEIGHT] += (h - SEAT_HEIGHT_BASE) / SEAT_HEIGHT_SCALE;
        }
        ShapeParam(x)
    }

    /// Probability that a sample keeps both back legs and at least one
    /// front leg, the configurations that stand under gravity.
    pub fn design_stable_rate(&self) -> f64 {
        let present = |i: usize| 0.5 * (1.0 + erf(self.mean[i] / (self.std[i] * std::f64::consts::SQRT_2)));
        let [fl, fr, bl, br] = LEG_LOGITS.map(present);
        bl * br * (1.0 - (1.0 - fl) * (1.0 - fr))
    }
}
