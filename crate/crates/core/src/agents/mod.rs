//! Actor-critic learners driven by the configurable TD target.
//!
//! * [`pg`]: on-policy clipped-ratio policy gradient, advantage `y - V(s)`.
//! * [`sac`]: off-policy reparameterised actor with twin action-value critics.
//!
//! Both learners take their targets from [`crate::td`], so the handler is the
//! only thing that changes between otherwise identical runs.

pub mod checkpoint;
pub mod pg;
pub mod policy;
pub mod replay;
pub mod rollout;
pub mod sac;

use thiserror::Error;

use crate::envs::EnvError;
use crate::nn::NnError;
use crate::td::TdError;

pub use pg::{PgAgent, PgConfig, PgDiagnostics};
pub use policy::{GaussianPolicy, PolicySample};
pub use replay::{ReplayBuffer, StoredTransition};
pub use rollout::{collect_rollout, EpisodeEnd, EpisodeLog, EpisodeRunner, RolloutBatch, RolloutStep};
pub use sac::{ActionCritic, SacAgent, SacConfig, SacDiagnostics, TwinCritic};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("update called with an empty batch")]
    EmptyBatch,
    #[error("replay buffer holds {have} transitions, batch needs {need}")]
    NotEnoughSamples { have: usize, need: usize },
    #[error("training diverged at step {step}: {what} is not finite")]
    Diverged { step: u64, what: &'static str },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Td(#[from] TdError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Algorithm family selector shared by the harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// On-policy policy gradient.
    Pg,
    /// Off-policy reparameterised actor-critic.
    Reparam,
    /// Tabular Q-learning (enumerable environments only).
    Tabular,
}

impl Algo {
    pub fn as_str(self) -> &'static str {
        match self {
            Algo::Pg => "pg",
            Algo::Reparam => "reparam",
            Algo::Tabular => "tabular",
        }
    }
}

impl std::str::FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pg" => Ok(Algo::Pg),
            "reparam" => Ok(Algo::Reparam),
            "tabular" => Ok(Algo::Tabular),
            other => Err(format!("unknown algorithm `{other}` (known: pg, reparam, tabular)")),
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Running mean of absolute TD errors for the episode in progress.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct TdErrorMeter {
    sum: f64,
    count: u64,
}

impl TdErrorMeter {
    pub(crate) fn add(&mut self, abs_err: f64) {
        self.sum += abs_err;
        self.count += 1;
    }

    /// Mean so far (0 when nothing was recorded), then resets.
    pub(crate) fn take(&mut self) -> f64 {
        let m = if self.count == 0 { 0.0 } else { self.sum / self.count as f64 };
        *self = TdErrorMeter::default();
        m
    }
}
