//! Monte Carlo experiment driver: configuration, execution and artifacts.

pub mod calibrate;
pub mod config;
pub mod report;
pub mod run;

pub use config::ExperimentConfig;
pub use report::{run_experiment, sweep_to_csv, RunReport, SummaryRow};
pub use run::{Mode, TrialResult};
