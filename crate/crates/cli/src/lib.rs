//! Experiment harness and command-line front end for `spm-core`.
//!
//! Experiments are described by flat key-value spec files, run on a worker
//! pool with per-trial random streams and written as long-format CSV tables
//! with optional SVG plots.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod spec;
pub mod table;

pub use cli::cli_main;
pub use error::{HarnessError, Result};
pub use experiments::{
    correlated_pair, gen_random_ensemble, random_ensemble, run_experiment, run_fig_deflation, run_fig_grammian,
    run_fig_init, run_fig_noise, run_fig_recovery,
};
pub use spec::{Cell, ExperimentKind, ExperimentSpec};
pub use table::ResultTable;
