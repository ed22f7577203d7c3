use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::GaussianPolicy;
use super::rollout::{collect_rollout, EpisodeLog, EpisodeRunner, RolloutBatch};
use super::{AgentError, TdErrorMeter};
use crate::envs::{EnvSpec, Environment};
use crate::nn::{Activation, Adam, GradientBuffer, Init, Mlp};
use crate::td::TdConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct PgConfig {
    pub td: TdConfig,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub rollout_steps: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub clip: f64,
}

impl PgConfig {
    pub fn new(td: TdConfig) -> Self {
        PgConfig {
            td,
            hidden: vec![64, 64],
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            rollout_steps: 2048,
            epochs: 10,
            minibatch: 64,
            clip: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PgDiagnostics {
    /// Mean `|y - V(s)|` over the batch before the update.
    pub mean_abs_td_error: f64,
    /// Monte Carlo entropy estimate from the behaviour log-densities.
    pub entropy: f64,
    /// Mean squared TD error of the last critic minibatch, before its step.
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub clip_fraction: f64,
}

/// Clipped-surrogate loss and its parameter gradient for one minibatch.
///
/// Loss is `-mean(min(ρA, clip(ρ, 1±ε)A))` with `ρ = exp(lnπ(u|s) - lnπ_old)`.
/// The pre-squash actions `raws` are held fixed, so the squash correction has
/// no parameter dependence.
pub fn pg_actor_gradient(
    policy: &GaussianPolicy,
    states: ArrayView2<f64>,
    raws: ArrayView2<f64>,
    log_prob_old: ArrayView1<f64>,
    advantages: ArrayView1<f64>,
    clip: f64,
) -> Result<(GradientBuffer, f64, f64), AgentError> {
    let m = states.nrows();
    if m == 0 {
        return Err(AgentError::EmptyBatch);
    }
    let heads = policy.heads(states)?;
    let lp = policy.log_prob_batch(&heads, raws);
    let d = policy.action_dim();
    let mut d_mean = Array2::zeros((m, d));
    let mut d_ls = Array2::zeros((m, d));
    let mut loss = 0.0;
    let mut clipped = 0usize;
    for i in 0..m {
        let ratio = (lp[i] - log_prob_old[i]).exp();
        let a = advantages[i];
        let unclipped = ratio * a;
        let bounded = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        loss -= unclipped.min(bounded);
        if unclipped > bounded {
            clipped += 1;
            continue;
        }
        let coeff = -a * ratio / m as f64;
        for j in 0..d {
            let inv_var = (-2.0 * heads.log_std[[i, j]]).exp();
            let z = raws[[i, j]] - heads.mean[[i, j]];
            d_mean[[i, j]] = coeff * z * inv_var;
            d_ls[[i, j]] = coeff * (z * z * inv_var - 1.0);
        }
    }
    let grads = policy.backward_heads(&heads, &d_mean, &d_ls)?;
    Ok((grads, loss / m as f64, clipped as f64 / m as f64))
}

/// On-policy learner: clipped-ratio actor, state-value critic.
#[derive(Debug, Clone)]
pub struct PgAgent {
    pub cfg: PgConfig,
    pub policy: GaussianPolicy,
    pub critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    rng: ChaCha8Rng,
    env_steps: u64,
}

impl PgAgent {
    pub fn new(spec: &EnvSpec, cfg: PgConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(spec.state_dim, &cfg.hidden, &spec.action_bounds, &mut rng);
        let mut sizes = vec![spec.state_dim];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(1);
        let critic = Mlp::new(&sizes, Activation::Tanh, Init::CRITIC, &mut rng);
        PgAgent {
            actor_opt: Adam::for_net(cfg.actor_lr, &policy.net),
            critic_opt: Adam::for_net(cfg.critic_lr, &critic),
            cfg,
            policy,
            critic,
            rng,
            env_steps: 0,
        }
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// One Adam step on `mean((V(s) - y)²)`; returns the loss before the step.
    pub fn critic_step(&mut self, states: ArrayView2<f64>, targets: ArrayView1<f64>) -> Result<f64, AgentError> {
        if states.nrows() == 0 {
            return Err(AgentError::EmptyBatch);
        }
        let cache = self.critic.forward_cached(states)?;
        let err = &cache.output.column(0) - &targets;
        let loss = err.mapv(|e| e * e).mean().unwrap_or(0.0);
        let og = (&err * (2.0 / states.nrows() as f64)).insert_axis(Axis(1));
        let g = self.critic.backward_cached(&cache, og.view())?;
        self.critic_opt.step(&mut self.critic, &g);
        Ok(loss)
    }

    /// Fits the critic to the batch targets and the actor to the clipped surrogate.
    pub fn update(&mut self, batch: &RolloutBatch) -> Result<PgDiagnostics, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        let n = batch.len();
        let states = batch.states();
        let raws = batch.raw_actions();
        let targets = Array1::from_iter(batch.steps.iter().map(|s| s.target));
        let lp_old = Array1::from_iter(batch.steps.iter().map(|s| s.log_prob));
        let adv = Array1::from_iter(batch.steps.iter().map(|s| s.target - s.value));
        let mut diag = PgDiagnostics {
            mean_abs_td_error: adv.mapv(f64::abs).mean().unwrap_or(0.0),
            entropy: -lp_old.mean().unwrap_or(0.0),
            ..Default::default()
        };
        let mut order: Vec<usize> = (0..n).collect();
        let (mut clip_sum, mut clip_count) = (0.0, 0usize);
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.minibatch.max(1)) {
                let s = states.select(Axis(0), chunk);
                let y = targets.select(Axis(0), chunk);

                diag.critic_loss = self.critic_step(s.view(), y.view())?;

                let (g, loss, frac) = pg_actor_gradient(
                    &self.policy,
                    s.view(),
                    raws.select(Axis(0), chunk).view(),
                    lp_old.select(Axis(0), chunk).view(),
                    adv.select(Axis(0), chunk).view(),
                    self.cfg.clip,
                )?;
                self.actor_opt.step(&mut self.policy.net, &g);
                diag.actor_loss = loss;
                clip_sum += frac;
                clip_count += 1;
            }
        }
        diag.clip_fraction = clip_sum / clip_count.max(1) as f64;
        if !self.critic.is_finite() {
            return Err(AgentError::Diverged { step: self.env_steps, what: "critic" });
        }
        if !self.policy.net.is_finite() {
            return Err(AgentError::Diverged { step: self.env_steps, what: "actor" });
        }
        Ok(diag)
    }

    /// Trains for exactly `episodes` episodes, reporting each as it ends.
    pub fn train<E: Environment>(
        &mut self,
        env: E,
        episodes: usize,
        run_seed: u64,
        mut on_episode: impl FnMut(EpisodeLog),
    ) -> Result<(), AgentError> {
        let mut runner = EpisodeRunner::new(env, run_seed);
        let mut meter = TdErrorMeter::default();
        let mut done = 0;
        while done < episodes {
            let batch = collect_rollout(
                &mut runner,
                &self.policy,
                &self.critic,
                self.cfg.rollout_steps,
                Some(episodes - done),
                &self.cfg.td,
                &mut self.rng,
            )?;
            self.env_steps += batch.len() as u64;
            let mut ends = batch.episodes.iter();
            for s in &batch.steps {
                meter.add((s.target - s.value).abs());
                if s.transition.termination.ends_episode() {
                    let end = *ends.next().expect("one end per terminal step");
                    on_episode(EpisodeLog { end, mean_td_error: meter.take() });
                }
            }
            done += batch.episodes.len();
            self.update(&batch)?;
        }
        Ok(())
    }
}
