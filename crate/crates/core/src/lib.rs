//! Spatiotemporal gradient-boosted gap filling for gridded time-series rasters.
//!
//! The crate reconstructs cloud-masked cells of a `(time, rows, cols)` cube
//! from static and per-day covariates plus the means of observed neighbours
//! in space and time. It bundles a second-order boosted tree learner, linear
//! and bagged-forest baselines, Savitzky-Golay post-smoothing, regression
//! metrics, cloud-mask simulation, experiment sweeps and a synthetic scene
//! generator.

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod gbt;
pub mod grid;
pub mod models;
pub mod smoothing;
pub mod synth;

pub use error::{Error, Result};
