use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{Algo, PgConfig, SacConfig};
use crate::envs::{make_env, CliffChain};
use crate::td::{Handler, TdConfig, DEFAULT_GAMMA, DEFAULT_LAMBDA};

pub const DEFAULT_CONTINUOUS_EPISODES: usize = 500;
pub const DEFAULT_TABULAR_EPISODES: usize = 2000;
pub const DEFAULT_EVAL_EPISODES: usize = 20;

/// Optional agent hyperparameters. Unset fields keep the agent defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverrides {
    pub hidden: Option<Vec<usize>>,
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub buffer_capacity: Option<usize>,
    pub warmup_steps: Option<u64>,
    pub updates_per_step: Option<usize>,
    pub alpha: Option<f64>,
    pub polyak: Option<f64>,
    pub rollout_steps: Option<usize>,
    pub epochs: Option<usize>,
    pub minibatch: Option<usize>,
    pub clip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(Handler),
    Many(Vec<Handler>),
}

fn handlers_de<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<Handler>, D::Error> {
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(h) => vec![h],
        OneOrMany::Many(v) => v,
    })
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_eval() -> usize {
    DEFAULT_EVAL_EPISODES
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_true() -> bool {
    true
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

/// One experiment: a seed sweep for each listed handler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: String,
    pub algo: Algo,
    /// A single handler or a list; each becomes one summary.
    #[serde(rename = "handler", deserialize_with = "handlers_de")]
    pub handlers: Vec<Handler>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub offset: f64,
    /// Training episodes per seed; defaults depend on the algorithm. Zero
    /// evaluates the freshly initialised agent.
    #[serde(default)]
    pub episodes: Option<usize>,
    #[serde(default = "default_eval")]
    pub eval_episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_true")]
    pub treat_time_limit_as_terminal: bool,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Tabular runs only: MDP description to use instead of the built-in cliff chain.
    #[serde(default)]
    pub mdp_file: Option<PathBuf>,
    /// Write real elapsed milliseconds to `wall_ms`; off keeps logs byte-reproducible.
    #[serde(default)]
    pub record_wall_clock: bool,
    /// Save a checkpoint per trained seed.
    #[serde(default)]
    pub checkpoint: bool,
    #[serde(default)]
    pub agent: AgentOverrides,
}

fn field(name: &'static str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: name,
        msg: msg.into(),
    }
}

impl ExperimentConfig {
    pub fn new(env: &str, algo: Algo, handlers: Vec<Handler>) -> Self {
        ExperimentConfig {
            env: env.to_string(),
            algo,
            handlers,
            gamma: DEFAULT_GAMMA,
            lambda: DEFAULT_LAMBDA,
            offset: 0.0,
            episodes: None,
            eval_episodes: DEFAULT_EVAL_EPISODES,
            seeds: default_seeds(),
            treat_time_limit_as_terminal: true,
            out: default_out(),
            mdp_file: None,
            record_wall_clock: false,
            checkpoint: false,
            agent: AgentOverrides::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads a config; a relative `mdp_file` is resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(mdp), Some(dir)) = (&cfg.mdp_file, path.parent()) {
            if mdp.is_relative() {
                cfg.mdp_file = Some(dir.join(mdp));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn train_episodes(&self) -> usize {
        self.episodes.unwrap_or(match self.algo {
            Algo::Tabular => DEFAULT_TABULAR_EPISODES,
            Algo::Pg | Algo::Reparam => DEFAULT_CONTINUOUS_EPISODES,
        })
    }

    pub fn td_config(&self, handler: Handler) -> TdConfig {
        TdConfig::new(handler)
            .with_gamma(self.gamma)
            .with_lambda(self.lambda)
            .with_time_limit_as_terminal(self.treat_time_limit_as_terminal)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(field("seeds", "seed list is empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(field("seeds", "seeds must be distinct"));
        }
        if self.handlers.is_empty() {
            return Err(field("handler", "no handler given"));
        }
        let mut hs = self.handlers.clone();
        hs.dedup();
        if hs.len() != self.handlers.len() {
            return Err(field("handler", "handlers must be distinct"));
        }
        TdConfig::new(Handler::Zero)
            .with_gamma(self.gamma)
            .validate()
            .map_err(|e| field("gamma", e.to_string()))?;
        TdConfig::new(Handler::Zero)
            .with_lambda(self.lambda)
            .validate()
            .map_err(|e| field("lambda", e.to_string()))?;
        if self.gamma >= 1.0 {
            return Err(field("gamma", "gamma must be below 1"));
        }
        if !self.offset.is_finite() {
            return Err(field("offset", "offset must be finite"));
        }
        if self.eval_episodes == 0 {
            return Err(field("eval_episodes", "need at least one evaluation episode"));
        }
        match (self.algo, &self.mdp_file) {
            (Algo::Tabular, Some(_)) => {}
            (Algo::Tabular, None) if self.env == CliffChain::NAME => {}
            (Algo::Tabular, None) => {
                return Err(field("env", format!("tabular runs need `{}` or an mdp_file", CliffChain::NAME)));
            }
            (_, Some(_)) => return Err(field("mdp_file", "mdp_file is only used by tabular runs")),
            (_, None) => {
                make_env(&self.env).map_err(|e| field("env", e.to_string()))?;
            }
        }
        if let Some(h) = &self.agent.hidden {
            if h.is_empty() || h.contains(&0) {
                return Err(field("agent.hidden", "hidden layer sizes must be positive"));
            }
        }
        for (name, v) in [
            ("agent.actor_lr", self.agent.actor_lr),
            ("agent.critic_lr", self.agent.critic_lr),
            ("agent.clip", self.agent.clip),
        ] {
            if v.is_some_and(|x| !(x > 0.0 && x.is_finite())) {
                return Err(field(name, "must be positive"));
            }
        }
        if self.agent.alpha.is_some_and(|a| !(a >= 0.0 && a.is_finite())) {
            return Err(field("agent.alpha", "must be non-negative"));
        }
        if self.agent.polyak.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
            return Err(field("agent.polyak", "must lie in [0, 1]"));
        }
        for (name, v) in [
            ("agent.batch_size", self.agent.batch_size),
            ("agent.buffer_capacity", self.agent.buffer_capacity),
            ("agent.updates_per_step", self.agent.updates_per_step),
            ("agent.rollout_steps", self.agent.rollout_steps),
            ("agent.epochs", self.agent.epochs),
            ("agent.minibatch", self.agent.minibatch),
        ] {
            if v == Some(0) {
                return Err(field(name, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn sac_config(&self, handler: Handler) -> SacConfig {
        let mut c = SacConfig::new(self.td_config(handler));
        let o = &self.agent;
        if let Some(h) = &o.hidden {
            c.hidden = h.clone();
        }
        c.actor_lr = o.actor_lr.unwrap_or(c.actor_lr);
        c.critic_lr = o.critic_lr.unwrap_or(c.critic_lr);
        c.batch_size = o.batch_size.unwrap_or(c.batch_size);
        c.buffer_capacity = o.buffer_capacity.unwrap_or(c.buffer_capacity);
        c.warmup_steps = o.warmup_steps.unwrap_or(c.warmup_steps);
        c.updates_per_step = o.updates_per_step.unwrap_or(c.updates_per_step);
        c.alpha = o.alpha.unwrap_or(c.alpha);
        c.polyak = o.polyak.unwrap_or(c.polyak);
        c
    }

    pub fn pg_config(&self, handler: Handler) -> PgConfig {
        let mut c = PgConfig::new(self.td_config(handler));
        let o = &self.agent;
        if let Some(h) = &o.hidden {
            c.hidden = h.clone();
        }
        c.actor_lr = o.actor_lr.unwrap_or(c.actor_lr);
        c.critic_lr = o.critic_lr.unwrap_or(c.critic_lr);
        c.rollout_steps = o.rollout_steps.unwrap_or(c.rollout_steps);
        c.epochs = o.epochs.unwrap_or(c.epochs);
        c.minibatch = o.minibatch.unwrap_or(c.minibatch);
        c.clip = o.clip.unwrap_or(c.clip);
        c
    }
}
