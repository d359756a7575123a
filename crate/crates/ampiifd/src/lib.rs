//! Multimodal remote-sensing image registration built on a nonlinear
//! diffusion scale space, rotation- and intensity-robust 128-dimensional
//! region descriptors, bilateral best-bin-first matching with orientation
//! consistency filtering, and robust planar transform estimation.
//!
//! The [`pipeline::run_register`] entry point runs the whole chain and
//! writes artifacts; the stage modules are usable independently.

pub mod config;
pub mod descriptor;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod image;
pub mod kdtree;
pub mod matching;
pub mod pipeline;
pub mod scale_space;
pub mod synth;
pub mod transform;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use evaluation::RegistrationReport;
pub use pipeline::run_register;
pub use transform::{ModelKind, TransformModel};
