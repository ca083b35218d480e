//! Path tracing with a learned incident-radiance field and TD-learned light selection.

pub mod atomic;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod guiding;
pub mod image;
pub mod integrator;
pub mod materials;
pub mod math;
pub mod sampling;
pub mod scene;
pub mod scene_file;
pub mod scenes;
pub mod td_select;

pub use error::{Error, Result};
pub use math::{Frame, Spectrum, Vec3};
