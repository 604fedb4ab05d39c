//! Pipeline runner for patch-correspondence datasets built from static
//! webcam archives: content-hashed stages, on-disk formats, synthetic
//! fixtures and the review API.

pub mod config;
pub mod formats;
pub mod imageio;
pub mod layout;
pub mod manifest;
pub mod records;
pub mod review;
pub mod server;
pub mod stage;
pub mod synth;

pub use config::PipelineConfig;
pub use stage::{run_stage, Stage, StageStatus};
