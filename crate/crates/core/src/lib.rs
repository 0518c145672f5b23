//! Physics-in-the-loop toolkit for human–scene interaction reconstruction.

pub mod bench;
pub mod body;
pub mod dsro;
pub mod geometry;
pub mod math;
pub mod motion_refine;
pub mod pointmap_align;
pub mod scene_align;
pub mod simulator;
