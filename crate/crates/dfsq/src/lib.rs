//! Experiment harness for distributed functional scalar quantization.
//!
//! This crate adds what the `no_std` core leaves out: configuration files,
//! thread-parallel Monte Carlo drivers, CSV output, and the `dfsq` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod par;

pub use config::{ComputationSpec, ExperimentConfig, ExperimentName, SourceSpec};
pub use error::HarnessError;
pub use experiments::{best_uniform_granular, run_example, ExampleOutput, GranularSearch};
