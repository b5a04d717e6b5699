//! Differentiable physically based inverse rendering of a deforming subject.
//!
//! From posed multi-view frames the trainer recovers a density field, per-point
//! normal, visibility, diffuse and roughness heads and an environment light
//! probe. The recovered decomposition can be re-rendered from new viewpoints
//! under new probes, including one-light-at-a-time probes.

pub mod dataset;
pub mod diffcore;
pub mod error;
pub mod export;
pub mod field;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod model;
pub mod probe;
pub mod reflectance;
pub mod renderer;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use image::Image;
pub use math::{Aabb, Mat3, Ray, Vec3};
pub use probe::{LightProbe, TexelGeometry};
