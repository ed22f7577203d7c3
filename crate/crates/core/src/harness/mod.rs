//! Experiment runner: seed sweeps, per-episode CSV logs, run summaries and
//! the cross-method comparison table.
//!
//! Output layout under `out`:
//!
//! ```text
//! config.toml
//! comparison.txt
//! comparison.csv
//! <algo>_<handler>/summary.json
//! <algo>_<handler>/train_seed<n>.csv
//! <algo>_<handler>/eval_seed<n>.csv
//! ```
//!
//! Returns in logs and summaries are native: the reward offset is removed.

mod config;
mod log;
mod run;
mod summary;

use thiserror::Error;

use crate::agents::AgentError;
use crate::envs::EnvError;
use crate::oracle::MdpError;
use crate::td::TdError;

pub use config::{
    AgentOverrides, ExperimentConfig, DEFAULT_CONTINUOUS_EPISODES, DEFAULT_EVAL_EPISODES, DEFAULT_TABULAR_EPISODES,
};
pub use log::{read_rows, write_rows, EpisodeRow, CSV_HEADER};
pub use run::{cell_dir, run_experiment, EVAL_SEED_SHIFT};
pub use summary::{compare, ComparisonRow, ComparisonTable, RunSummary, SeedRecord};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{field}`: {msg}")]
    Config { field: &'static str, msg: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Td(#[from] TdError),
    #[error("inconsistent summary: {0}")]
    Summary(String),
    #[error("cannot compare: {0}")]
    Compare(String),
}

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io(path.display().to_string(), e)
}
