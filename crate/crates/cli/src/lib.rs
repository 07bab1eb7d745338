//! Command-line driver for `optreg`: reads a plant file and a run config,
//! runs one command and writes CSVs, `report.txt` and `manifest.json`.

pub mod config;
mod run;

pub use config::{
    finalize, parse_bound, parse_run_config, read_run_config, Command, ConfigPatch, ControllerChoice,
    RunConfig,
};
pub use run::{run, RunSummary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{stage}: {source}")]
    Solver {
        stage: String,
        #[source]
        source: optreg::Error,
    },

    /// The solver ran but did not meet its own acceptance test.
    #[error("{stage}: {message}")]
    NotConverged { stage: String, message: String },

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver { .. } | CliError::NotConverged { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}
