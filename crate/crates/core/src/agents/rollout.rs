use ndarray::Array2;
use rand::Rng;

use super::policy::GaussianPolicy;
use super::AgentError;
use crate::envs::{EnvSpec, Environment, StepResult};
use crate::nn::Mlp;
use crate::td::{TdConfig, TerminationKind, Transition};

/// Per-episode reset seed derived from a run seed (splitmix64 mixing).
pub fn episode_seed(run_seed: u64, episode: u64) -> u64 {
    let mut z = run_seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(episode.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Summary of one finished episode, in the agent's (possibly offset) rewards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeEnd {
    pub index: u64,
    pub total_reward: f64,
    pub length: usize,
    pub termination: TerminationKind,
}

/// Episode record emitted by the training loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLog {
    pub end: EpisodeEnd,
    /// Mean absolute TD error of the updates attributed to this episode.
    pub mean_td_error: f64,
}

/// Drives an environment across episodes, resetting automatically.
pub struct EpisodeRunner<E> {
    env: E,
    run_seed: u64,
    state: Vec<f64>,
    episode: u64,
    total: f64,
    length: usize,
}

impl<E: Environment> EpisodeRunner<E> {
    pub fn new(mut env: E, run_seed: u64) -> Self {
        let state = env.reset(episode_seed(run_seed, 0));
        EpisodeRunner {
            env,
            run_seed,
            state,
            episode: 0,
            total: 0.0,
            length: 0,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        self.env.spec()
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn episodes_completed(&self) -> u64 {
        self.episode
    }

    /// Steps the environment. `StepResult::next_state` is always the true
    /// successor; after a terminal step the runner has already reset.
    pub fn step(&mut self, action: &[f64]) -> Result<(Transition, Option<EpisodeEnd>), AgentError> {
        let StepResult {
            next_state,
            reward,
            termination,
        } = self.env.step(action)?;
        self.total += reward;
        self.length += 1;
        let transition = Transition {
            state: std::mem::take(&mut self.state),
            action: action.to_vec(),
            reward,
            next_state,
            termination,
        };
        let end = if termination.ends_episode() {
            let end = EpisodeEnd {
                index: self.episode,
                total_reward: self.total,
                length: self.length,
                termination,
            };
            self.episode += 1;
            self.total = 0.0;
            self.length = 0;
            self.state = self.env.reset(episode_seed(self.run_seed, self.episode));
            Some(end)
        } else {
            self.state = transition.next_state.clone();
            None
        };
        Ok((transition, end))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    pub transition: Transition,
    pub raw_action: Vec<f64>,
    pub log_prob: f64,
    /// Critic value at the state, recorded before any update.
    pub value: f64,
    pub next_value: f64,
    pub target: f64,
}

/// On-policy steps in collection order, with targets already computed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub steps: Vec<RolloutStep>,
    pub episodes: Vec<EpisodeEnd>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states(&self) -> Array2<f64> {
        rows(self.steps.iter().map(|s| s.transition.state.as_slice()))
    }

    pub fn raw_actions(&self) -> Array2<f64> {
        rows(self.steps.iter().map(|s| s.raw_action.as_slice()))
    }

    /// Recomputes every target from the stored values under `cfg`.
    pub fn recompute_targets(&mut self, cfg: &TdConfig) -> Result<(), AgentError> {
        for s in &mut self.steps {
            s.target = s.transition.td_target(s.value, s.next_value, cfg)?;
        }
        Ok(())
    }
}

pub(crate) fn rows<'a>(it: impl ExactSizeIterator<Item = &'a [f64]>) -> Array2<f64> {
    let n = it.len();
    let mut flat = Vec::new();
    let mut width = 0;
    for r in it {
        width = r.len();
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((n, width), flat).expect("rows share a width")
}

/// Runs `policy` for up to `steps` steps (or until `max_episodes` episodes end),
/// then evaluates the critic on every state and successor and computes the
/// targets under `td`.
pub fn collect_rollout<E: Environment>(
    runner: &mut EpisodeRunner<E>,
    policy: &GaussianPolicy,
    critic: &Mlp,
    steps: usize,
    max_episodes: Option<usize>,
    td: &TdConfig,
    rng: &mut impl Rng,
) -> Result<RolloutBatch, AgentError> {
    let mut batch = RolloutBatch::default();
    while batch.steps.len() < steps {
        if max_episodes.is_some_and(|m| batch.episodes.len() >= m) {
            break;
        }
        let sample = policy.sample(runner.state(), rng)?;
        let (transition, end) = runner.step(&sample.action)?;
        batch.steps.push(RolloutStep {
            transition,
            raw_action: sample.raw,
            log_prob: sample.log_prob,
            value: 0.0,
            next_value: 0.0,
            target: 0.0,
        });
        batch.episodes.extend(end);
    }
    if batch.steps.is_empty() {
        return Ok(batch);
    }
    let states = batch.states();
    let next = rows(batch.steps.iter().map(|s| s.transition.next_state.as_slice()));
    let v = critic.forward_batch(states.view())?;
    let v_next = critic.forward_batch(next.view())?;
    for (i, s) in batch.steps.iter_mut().enumerate() {
        s.value = v[[i, 0]];
        s.next_value = v_next[[i, 0]];
    }
    batch.recompute_targets(td)?;
    Ok(batch)
}
