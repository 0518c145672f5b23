//! Deterministic rigid-body settling.
//!
//! Bodies are rigid meshes colliding through convex pieces (the hull of the
//! mesh unless explicit pieces are given) against a ground plane at `z = 0`,
//! each other, and an optional kinematic human made of capsules. Contacts
//! are resolved with sequential impulses and Coulomb friction; integration
//! is semi-implicit Euler.

mod outcome;
mod world;

pub use outcome::{
    classify_outcome, classify_with_gravity, gravity_stability, settle, stability_label,
    Displacement, OutcomeType, SettleOutcome, SettleParams, StabilityScenario, GRAVITY_MAX_SHIFT,
    GRAVITY_MAX_TURN,
};
pub use world::{BodyDesc, HumanDriver, RigidBody, StepInfo, World};

use thiserror::Error;

use crate::geometry::GeometryError;

pub const GRAVITY: f64 = 9.81;
pub const DEFAULT_DT: f64 = 1.0 / 240.0;
pub const DEFAULT_FRICTION: f64 = 0.6;
/// Wood-like default density when a body gives no mass.
pub const DEFAULT_DENSITY: f64 = 500.0;
pub const MAX_SPEED: f64 = 1e3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("body {body} ({name}) blew up: speed {speed:.3e} m/s")]
    BlowUp {
        body: usize,
        name: String,
        speed: f64,
    },
    #[error("time step {0} outside (0, 1/60]")]
    BadTimeStep(f64),
    #[error("invalid body `{name}`: {reason}")]
    InvalidBody { name: String, reason: String },
    #[error("invalid settle parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
