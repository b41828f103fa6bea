//! Multimodal trajectory prediction toolkit for unstructured roads.
//!
//! The crate covers the full desk-scale pipeline: scene data handling and
//! synthetic scenario generation, agent-centric BEV rasterization, a compact
//! trainable convolutional predictor emitting M trajectories with
//! probabilities, kinematic/EKF baselines, and displacement-error
//! evaluation with a drivable-area feasibility filter.

pub mod error;
pub mod eval;
pub mod geom;
pub mod nn;
pub mod physics;
pub mod raster;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
