//! Configuration and experiment runner behind the `slitkit` binary.

// `!(a < b)` is used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;
pub mod spec;

pub use config::{ExperimentConfig, Kind, OUTPUT_ENV, SCHEMA_VERSION};
pub use run::{run, Check, RunOutcome};
