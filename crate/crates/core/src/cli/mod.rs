//! Configuration parsing and experiment orchestration behind the
//! `eikonal-lab` binary.

pub mod config;
pub mod run;

pub use config::Config;
pub use run::{build_field, parse_region, run, Experiment, FieldSpec, GridSpec, RunOutcome};
