use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mdp::TabularMdp;
use super::solve::{argmax, sample_next};
use crate::td::{td_target, TdConfig, TdError, TerminationKind, ValueTriple};

/// Exploration and step-size schedule for tabular TD.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSchedule {
    pub episodes: usize,
    /// ε decays linearly from `epsilon_start` to `epsilon_end` over the run.
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Step size in episode `k` is `lr0 / sqrt(k + 1)`.
    pub lr0: f64,
    /// Added to every experienced reward.
    pub reward_offset: f64,
    /// Keep every transition so the run can be replayed.
    pub record_stream: bool,
}

impl TabularSchedule {
    pub fn new(episodes: usize) -> Self {
        TabularSchedule {
            episodes,
            epsilon_start: 0.1,
            epsilon_end: 0.01,
            lr0: 0.1,
            reward_offset: 0.0,
            record_stream: false,
        }
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            return self.epsilon_start;
        }
        let frac = episode as f64 / (self.episodes - 1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac.min(1.0)
    }

    pub fn lr(&self, episode: usize) -> f64 {
        self.lr0 / ((episode + 1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularStep {
    pub episode: usize,
    pub state: usize,
    pub action: usize,
    /// Experienced reward, offset included.
    pub reward: f64,
    pub next: usize,
    pub termination: TerminationKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularEpisode {
    pub index: usize,
    pub total_reward: f64,
    pub length: usize,
    pub termination: TerminationKind,
    pub mean_td_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularRun {
    /// Learned action values; terminal rows stay at 0.
    pub q: Vec<Vec<f64>>,
    pub policy: Vec<usize>,
    pub episodes: Vec<TabularEpisode>,
    /// Every transition in order, when the schedule asked for it.
    pub stream: Vec<TabularStep>,
}

impl TabularRun {
    /// `max_a Q(s, a)` per state.
    pub fn values(&self) -> Vec<f64> {
        self.q.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect()
    }
}

/// Q-learning update for one transition; returns `|y - Q(s, a)|`.
/// The handler sees `V = Q(s, a)` and `V' = max_a' Q(s', a')`.
fn update(q: &mut [Vec<f64>], step: &TabularStep, td: &TdConfig, lr: f64) -> Result<f64, TdError> {
    let v_next = q[step.next].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v = q[step.state][step.action];
    let y = td_target(
        step.termination,
        &ValueTriple {
            v,
            v_next,
            reward: step.reward,
        },
        td,
    )?;
    q[step.state][step.action] = v + lr * (y - v);
    Ok((y - v).abs())
}

fn greedy(q: &[Vec<f64>]) -> Vec<usize> {
    q.iter().map(|r| argmax(r)).collect()
}

/// ε-greedy tabular Q-learning with the configured terminal handler.
pub fn tabular_td(
    mdp: &TabularMdp,
    td: &TdConfig,
    schedule: &TabularSchedule,
    seed: u64,
) -> Result<TabularRun, TdError> {
    td.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = vec![vec![0.0; mdp.n_actions()]; mdp.n_states()];
    let mut episodes = Vec::with_capacity(schedule.episodes);
    let mut stream = Vec::new();
    for ep in 0..schedule.episodes {
        let eps = schedule.epsilon(ep);
        let lr = schedule.lr(ep);
        let mut s = mdp.start();
        let (mut total, mut err_sum) = (0.0, 0.0);
        let mut length = 0;
        let mut kind = TerminationKind::NotTerminal;
        while !kind.ends_episode() {
            let a = if rng.random::<f64>() < eps {
                rng.random_range(0..mdp.n_actions())
            } else {
                argmax(&q[s])
            };
            let next = sample_next(mdp, s, a, &mut rng);
            length += 1;
            kind = match mdp.kind_of(next) {
                TerminationKind::NotTerminal if length >= mdp.max_steps() => TerminationKind::TimeLimit,
                k => k,
            };
            let step = TabularStep {
                episode: ep,
                state: s,
                action: a,
                reward: mdp.reward(s, a) + schedule.reward_offset,
                next,
                termination: kind,
            };
            total += step.reward;
            err_sum += update(&mut q, &step, td, lr)?;
            if schedule.record_stream {
                stream.push(step);
            }
            s = next;
        }
        episodes.push(TabularEpisode {
            index: ep,
            total_reward: total,
            length,
            termination: kind,
            mean_td_error: err_sum / length as f64,
        });
    }
    Ok(TabularRun {
        policy: greedy(&q),
        q,
        episodes,
        stream,
    })
}

/// Re-learns from a recorded transition stream with a different handler.
pub fn replay_updates(
    mdp: &TabularMdp,
    stream: &[TabularStep],
    td: &TdConfig,
    schedule: &TabularSchedule,
) -> Result<Vec<Vec<f64>>, TdError> {
    td.validate()?;
    let mut q = vec![vec![0.0; mdp.n_actions()]; mdp.n_states()];
    for step in stream {
        update(&mut q, step, td, schedule.lr(step.episode))?;
    }
    Ok(q)
}
