//! Experiment pipelines and subcommand logic behind the `sfv` binary.

pub mod checks;
pub mod files;
pub mod pipeline;
pub mod summary;
pub mod tables;

pub use checks::Verdict;
pub use pipeline::{run_pipeline, AttackParams, ExperimentSpec, Scenario};
pub use tables::{reproduce_reference_tables, ReportOptions};

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const FAIL: u8 = 1;
    pub const INPUT: u8 = 2;
}
