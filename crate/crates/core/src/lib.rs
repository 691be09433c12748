//! Reconstruction-based face authentication and out-of-distribution
//! detection on raw FMCW radar frame cubes.

pub mod checkpoint;
pub mod config;
pub mod detect;
pub mod eval;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod radar;
pub mod tensor;
pub mod train;
