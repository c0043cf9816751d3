//! Configuration, execution and artifact handling for the `absorb-qd` tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod run;

pub use config::{parse_config, parse_value, ExperimentConfig, Kind};
pub use error::QdError;
pub use report::RunManifest;
pub use run::{run_experiment, RunOptions};
