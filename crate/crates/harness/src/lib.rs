//! Experiment harness: declarative run configs, multi-seed training,
//! paired-mode evaluation, symmetry checks and learning-curve plots.

pub mod check;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod eval;
pub mod plot;
pub mod report;
pub mod train;

pub use config::{Overrides, RunConfig, TrainMode};
pub use error::{HarnessError, Result};
