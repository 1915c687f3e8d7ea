//! hullgauge: severity grading of hull biofouling imagery.
//!
//! The pipeline runs in stages that each live in their own module:
//!
//! - [`dataset`]: synthetic hull images with exact fouling coverage, manifests,
//!   stratified splits, cross-validation folds and augmentation.
//! - [`nn`]: a compact convolutional scalar regressor with exact backprop and
//!   class-weighted regression losses.
//! - [`optim`]: SGD / Adam / RAdam / AdamW, learning-rate schedules and the
//!   learning-rate range test.
//! - [`hyperopt`]: Sobol quasi-random search driven by cross-validation.
//! - [`ensemble`]: raw-score averaging and exhaustive subset search.
//! - [`eval`]: binary task decomposition, PR curves, average precision and
//!   recall-targeted thresholds.
//! - [`raterstats`]: expert-group label pairing, agreement statistics, exact
//!   Fisher tests, Clopper-Pearson intervals and non-inferiority tests.
//! - [`pipeline`]: the orchestration used by the `hullgauge` command line tool.

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod fsio;
pub mod hyperopt;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod raterstats;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
