//! Command-line harness for the decoy-state toolkit: experiment configs,
//! figure data, Monte Carlo campaigns and CSV/JSON artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod table;

pub use commands::{run_command, Command, Overrides};
pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::{HarnessError, Result};
