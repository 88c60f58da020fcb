//! Semi-supervised optical flow under a label budget.
//!
//! The crate provides the loss stack used to train flow estimators from a
//! partially labeled dataset (occlusion-aware photometric, edge-aware
//! second-order smoothness, multi-scale robust supervised loss), the
//! frame-level uncertainty scores used to decide which samples to label,
//! and the selection strategies that spend the budget. A direct
//! coarse-to-fine optimizer stands in for a trained network so the whole
//! pipeline runs on synthetic data with exact ground truth.

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod flow_ops;
pub mod harness;
pub mod io;
pub mod losses;
pub mod raster;
pub mod synth;
pub mod types;
pub mod uncertainty;

pub use error::{Error, Result};
pub use types::{Budget, Dataset, FlowField, Image, LossConfig, OcclusionMask, Sample};
