//! Library surface of the command-line front end; the binary in
//! `main.rs` only parses arguments and maps errors to exit codes.

pub mod config;
pub mod experiment;

pub use config::{ExperimentConfig, Scenario};
pub use experiment::{
    apply_scenario, cmd_actions, cmd_baseline, cmd_compare, cmd_evaluate, cmd_gen_loads,
    cmd_outage, cmd_report, cmd_trace, cmd_train, compare_costs, delta_percent, prepare, read_day_costs,
    run_baseline, run_rl, BaselineDay, ComparisonRow, RlDay, TrainArtifacts, Workspace,
};
