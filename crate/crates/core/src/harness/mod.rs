//! Experiment configuration, single runs, multi-seed suites and the
//! acceptance checks shared by the CLI and the test suite.

pub mod config;
pub mod record;
pub mod runner;
pub mod suites;
pub mod verify;

pub use config::{ExperimentConfig, OptimizerSpec, ProblemKind, ProblemSpec, RunSpec, ScheduleSpec};
pub use record::{csv_string, emit_csv, emit_json, parse_csv, RecordRow, RunRecord, RunSummary, CSV_HEADER};
pub use runner::{run_single, run_single_with_iterates, true_metrics, write_run};
pub use suites::{
    noiseless_decay, run_seeds, run_switch_suite, run_theorem_suite, DecayFit, SwitchReport, TheoremReport,
};
pub use verify::{run_checks, CheckOutcome, ALL_CHECKS};
