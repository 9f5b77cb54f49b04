//! Configuration, experiment orchestration and report emission for the
//! `kinetic` command-line tool.

pub mod config;
pub mod run;

pub use config::{ConfigError, ExperimentKind, RunConfig};
pub use run::{report, run, write_outputs, CheckLine, RunError, RunOutcome, VerifyReport};
