//! Command-line front door: configuration, reporting, and the four
//! commands (`learn`, `sweep`, `simulate`, `diagnose`).

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{
    cmd_diagnose, cmd_learn, cmd_simulate, cmd_sweep, SimulateArgs, SimulateMode, TOOL_VERSION,
};
pub use config::{Overrides, RunConfig, ScenarioConfig};
pub use report::RunReport;
