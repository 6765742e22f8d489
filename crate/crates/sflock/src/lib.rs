//! Experiment configs, artifacts, presets and the `sflock` command line on
//! top of [`sflock_core`].

#![warn(missing_docs)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod custom;
pub mod experiment;
pub mod init;
pub mod io;
pub mod parallel;
pub mod presets;
pub mod svg;

pub use config::{ConfigError, ExperimentConfig, ExperimentFile};
pub use experiment::{run_and_write, run_experiment, Outcome, RunError};
pub use presets::{list_presets, preset, PRESETS};
