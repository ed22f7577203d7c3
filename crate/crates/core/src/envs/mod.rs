//! Small deterministic control tasks with explicit termination semantics.
//!
//! Every environment is deterministic given the reset seed and the action
//! sequence. Actions outside the declared bounds are clamped.

mod cartpole;
mod cliff;
mod reacher;

pub use cartpole::{CartPoleParams, PendulumBalance, SparseCartPole};
pub use cliff::{CliffChain, CliffLayout, CliffMove};
pub use reacher::Reacher2Link;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::td::TerminationKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("step called on `{0}` after the episode terminated; call reset first")]
    StepAfterTerminal(String),
    #[error("`{env}` expects {expected}-dimensional actions, got {got}")]
    ActionDim {
        env: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown environment `{0}` (known: {known})", known = ENV_NAMES.join(", "))]
    Unknown(String),
}

pub const ENV_NAMES: [&str; 4] = [
    PendulumBalance::NAME,
    Reacher2Link::NAME,
    SparseCartPole::NAME,
    CliffChain::NAME,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Per-dimension `(low, high)`.
    pub action_bounds: Vec<(f64, f64)>,
    pub max_steps: usize,
    /// Closed interval containing every native per-step reward.
    pub reward_range: (f64, f64),
}

impl EnvSpec {
    pub fn clamp_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(&self.action_bounds)
            .map(|(a, &(lo, hi))| a.clamp(lo, hi))
            .collect()
    }

    /// Offsets that make every reward strictly positive and strictly negative.
    /// Uses the conventional magnitude 10 whenever it is large enough.
    pub fn sign_definite_offsets(&self) -> (f64, f64) {
        let (lo, hi) = self.reward_range;
        let positive = match lo {
            lo if lo > 0.0 => 0.0,
            lo if lo > -10.0 => 10.0,
            lo => 1.0 - lo,
        };
        let negative = match hi {
            hi if hi < 0.0 => 0.0,
            hi if hi < 10.0 => -10.0,
            hi => -(hi + 1.0),
        };
        (positive, negative)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub termination: TerminationKind,
}

/// Constant reward shift applied to every step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OffsetConfig {
    pub offset: f64,
}

pub fn apply_offset(mut result: StepResult, cfg: OffsetConfig) -> StepResult {
    result.reward += cfg.offset;
    result
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode. The initial state depends only on `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;
}

/// Wraps an environment and shifts every reward by a constant.
pub struct OffsetEnv<E> {
    inner: E,
    cfg: OffsetConfig,
}

impl<E: Environment> OffsetEnv<E> {
    pub fn new(inner: E, cfg: OffsetConfig) -> Self {
        OffsetEnv { inner, cfg }
    }

    pub fn offset(&self) -> f64 {
        self.cfg.offset
    }

    pub fn into_inner(self) -> E {
        self.inner
    }
}

impl<E: Environment> Environment for OffsetEnv<E> {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        self.inner.step(action).map(|r| apply_offset(r, self.cfg))
    }
}

impl Environment for Box<dyn Environment> {
    fn spec(&self) -> &EnvSpec {
        (**self).spec()
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        (**self).reset(seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        (**self).step(action)
    }
}

/// Builds an environment by name with its default step cap.
pub fn make_env(name: &str) -> Result<Box<dyn Environment>, EnvError> {
    Ok(match name {
        PendulumBalance::NAME => Box::new(PendulumBalance::default()),
        Reacher2Link::NAME => Box::new(Reacher2Link::default()),
        SparseCartPole::NAME => Box::new(SparseCartPole::default()),
        CliffChain::NAME => Box::new(CliffChain::default()),
        other => return Err(EnvError::Unknown(other.to_string())),
    })
}

/// Tracks the step counter and terminal flag shared by every environment.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeClock {
    steps: usize,
    done: bool,
}

impl EpisodeClock {
    pub(crate) fn restart(&mut self) {
        self.steps = 0;
        self.done = false;
    }

    pub(crate) fn check(&self, spec: &EnvSpec, action: &[f64]) -> Result<(), EnvError> {
        if self.done {
            return Err(EnvError::StepAfterTerminal(spec.name.clone()));
        }
        if action.len() != spec.action_dim {
            return Err(EnvError::ActionDim {
                env: spec.name.clone(),
                expected: spec.action_dim,
                got: action.len(),
            });
        }
        Ok(())
    }

    /// Advances the counter. Any terminal kind from the task takes precedence
    /// over the time limit.
    pub(crate) fn tick(&mut self, spec: &EnvSpec, task: TerminationKind) -> TerminationKind {
        self.steps += 1;
        let kind = if task.ends_episode() {
            task
        } else if self.steps >= spec.max_steps {
            TerminationKind::TimeLimit
        } else {
            TerminationKind::NotTerminal
        };
        self.done = kind.ends_episode();
        kind
    }
}
