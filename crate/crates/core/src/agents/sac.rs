use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::policy::GaussianPolicy;
use super::replay::{ReplayBuffer, StoredTransition};
use super::rollout::{rows, EpisodeLog, EpisodeRunner};
use super::{AgentError, TdErrorMeter};
use crate::envs::{EnvSpec, Environment};
use crate::nn::{Activation, Adam, GradientBuffer, Init, Mlp};
use crate::td::{td_target_split, Handler, TdConfig, TerminationKind, ValueTriple};

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub td: TdConfig,
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Fixed entropy temperature.
    pub alpha: f64,
    pub polyak: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Uniform-random steps before the first update.
    pub warmup_steps: u64,
    pub updates_per_step: usize,
}

impl SacConfig {
    pub fn new(td: TdConfig) -> Self {
        SacConfig {
            td,
            hidden: vec![64, 64],
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha: 0.2,
            polyak: 0.995,
            batch_size: 128,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            updates_per_step: 1,
        }
    }
}

/// Lowest value and its action-gradient over an ensemble of action-value critics.
pub trait ActionCritic {
    /// Row-wise `min_k Q_k(s, a)` and `∂/∂a` of that minimum.
    fn min_value_and_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>), AgentError>;
}

/// Two action-value networks over the concatenated input `[s, a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinCritic {
    pub q1: Mlp,
    pub q2: Mlp,
}

impl TwinCritic {
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        TwinCritic {
            q1: Mlp::new(&sizes, Activation::Relu, Init::CRITIC, rng),
            q2: Mlp::new(&sizes, Activation::Relu, Init::CRITIC, rng),
        }
    }

    pub fn values(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>), AgentError> {
        let x = hcat(states, actions);
        let a = self.q1.forward_batch(x.view())?.column(0).to_owned();
        let b = self.q2.forward_batch(x.view())?.column(0).to_owned();
        Ok((a, b))
    }

    pub fn min_values(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array1<f64>, AgentError> {
        let (a, b) = self.values(states, actions)?;
        Ok(ndarray::Zip::from(&a).and(&b).map_collect(|&x, &y| x.min(y)))
    }

    pub fn soft_update_from(&mut self, online: &TwinCritic, polyak: f64) {
        self.q1.soft_update_from(&online.q1, polyak);
        self.q2.soft_update_from(&online.q2, polyak);
    }

    pub fn is_finite(&self) -> bool {
        self.q1.is_finite() && self.q2.is_finite()
    }
}

impl ActionCritic for TwinCritic {
    fn min_value_and_action_grad(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>), AgentError> {
        let sd = states.ncols();
        let x = hcat(states, actions);
        let c1 = self.q1.forward_cached(x.view())?;
        let c2 = self.q2.forward_cached(x.view())?;
        let n = x.nrows();
        let mut pick1 = Array2::zeros((n, 1));
        let mut pick2 = Array2::zeros((n, 1));
        let mut q = Array1::zeros(n);
        for i in 0..n {
            let (a, b) = (c1.output[[i, 0]], c2.output[[i, 0]]);
            if a <= b {
                pick1[[i, 0]] = 1.0;
                q[i] = a;
            } else {
                pick2[[i, 0]] = 1.0;
                q[i] = b;
            }
        }
        let g1 = self.q1.backward_cached(&c1, pick1.view())?;
        let g2 = self.q2.backward_cached(&c2, pick2.view())?;
        let grad = &g1.input.slice(s![.., sd..]) + &g2.input.slice(s![.., sd..]);
        Ok((q, grad))
    }
}

fn hcat(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a, b]).expect("row counts match")
}

/// Replay minibatch laid out as matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SacBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub raws: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub terminations: Vec<TerminationKind>,
}

impl SacBatch {
    pub fn from_transitions(items: &[&StoredTransition]) -> Self {
        SacBatch {
            states: rows(items.iter().map(|t| t.transition.state.as_slice())),
            actions: rows(items.iter().map(|t| t.transition.action.as_slice())),
            raws: rows(items.iter().map(|t| t.raw_action.as_slice())),
            rewards: items.iter().map(|t| t.transition.reward).collect(),
            next_states: rows(items.iter().map(|t| t.transition.next_state.as_slice())),
            terminations: items.iter().map(|t| t.transition.termination).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Reparameterised draws `u = μ + σ ε`, their squashed actions and log-densities.
fn reparam_draw(
    policy: &GaussianPolicy,
    heads: &super::policy::Heads,
    noise: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let raw = &heads.mean + &(heads.log_std.mapv(f64::exp) * noise);
    let act = rows_map(&raw, |r| policy.squash(r));
    let lp = policy.log_prob_batch(heads, raw.view());
    (raw, act, lp)
}

fn rows_map(m: &Array2<f64>, f: impl Fn(&[f64]) -> Vec<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(m.dim());
    for (i, r) in m.outer_iter().enumerate() {
        let v = f(r.as_slice().expect("contiguous"));
        out.row_mut(i).assign(&Array1::from(v));
    }
    out
}

/// Critic targets for a batch.
///
/// Bootstraps from `target` critics: `V' = min Q_targ(s', a') - α lnπ(a'|s')`
/// with `a' = squash(μ + σ ε)`. For rows the handler corrects, the shaping
/// deltas use the `online` critics at `(s, a_taken)` and `(s', a')`.
pub fn critic_targets(
    policy: &GaussianPolicy,
    online: &TwinCritic,
    target: &TwinCritic,
    batch: &SacBatch,
    noise_next: &Array2<f64>,
    alpha: f64,
    td: &TdConfig,
) -> Result<Array1<f64>, AgentError> {
    let heads = policy.heads(batch.next_states.view())?;
    let (_, a_next, lp_next) = reparam_draw(policy, &heads, noise_next);
    let v_boot = target.min_values(batch.next_states.view(), a_next.view())? - &(&lp_next * alpha);

    let exception: Vec<usize> = (0..batch.len())
        .filter(|&i| batch.terminations[i].is_exception(td.treat_time_limit_as_terminal))
        .collect();
    let mut shaping_v = Array1::<f64>::zeros(batch.len());
    let mut shaping_v_next = v_boot.clone();
    if td.handler == Handler::Underest && !exception.is_empty() {
        let s = batch.states.select(Axis(0), &exception);
        let a = batch.actions.select(Axis(0), &exception);
        let raw = batch.raws.select(Axis(0), &exception);
        let sn = batch.next_states.select(Axis(0), &exception);
        let an = a_next.select(Axis(0), &exception);
        let lp_taken = policy.log_prob_batch(&policy.heads(s.view())?, raw.view());
        let v = online.min_values(s.view(), a.view())? - &(&lp_taken * alpha);
        let v_next =
            online.min_values(sn.view(), an.view())? - &(&lp_next.select(Axis(0), &exception) * alpha);
        for (k, &i) in exception.iter().enumerate() {
            shaping_v[i] = v[k];
            shaping_v_next[i] = v_next[k];
        }
    }
    let mut y = Array1::zeros(batch.len());
    for i in 0..batch.len() {
        let triple = ValueTriple {
            v: shaping_v[i],
            v_next: shaping_v_next[i],
            reward: batch.rewards[i],
        };
        y[i] = td_target_split(batch.terminations[i], &triple, v_boot[i], td)?;
    }
    Ok(y)
}

/// Gradient of `mean(α lnπ(a|s) - min Q(s, a))` with `a = squash(μ + σ ε)`.
/// Returns the gradient, the loss and the entropy estimate `-mean lnπ`.
pub fn reparam_actor_gradient(
    policy: &GaussianPolicy,
    critic: &dyn ActionCritic,
    states: ArrayView2<f64>,
    noise: &Array2<f64>,
    alpha: f64,
) -> Result<(GradientBuffer, f64, f64), AgentError> {
    let n = states.nrows();
    if n == 0 {
        return Err(AgentError::EmptyBatch);
    }
    let heads = policy.heads(states)?;
    let (raw, act, lp) = reparam_draw(policy, &heads, noise);
    let (q, g_a) = critic.min_value_and_action_grad(states, act.view())?;
    let half = policy.half_range();
    let d = policy.action_dim();
    let mut d_mean = Array2::zeros((n, d));
    let mut d_ls = Array2::zeros((n, d));
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        for j in 0..d {
            let t = raw[[i, j]].tanh();
            let sig_eps = heads.log_std[[i, j]].exp() * noise[[i, j]];
            let dq_du = g_a[[i, j]] * half[j] * (1.0 - t * t);
            // lnπ = -ε²/2 - ls - ln(1 - t²) + const, with ε held fixed
            d_mean[[i, j]] = inv_n * (alpha * 2.0 * t - dq_du);
            d_ls[[i, j]] = inv_n * (alpha * (-1.0 + 2.0 * t * sig_eps) - dq_du * sig_eps);
        }
    }
    let grads = policy.backward_heads(&heads, &d_mean, &d_ls)?;
    let loss = (&lp * alpha - &q).mean().unwrap_or(0.0);
    Ok((grads, loss, -lp.mean().unwrap_or(0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SacDiagnostics {
    /// Mean `|y - Q1(s, a)|` before the critic step.
    pub mean_abs_td_error: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub entropy: f64,
    /// Batch rows the handler corrected.
    pub exception_rows: usize,
}

/// Off-policy learner with a reparameterised actor and twin critics.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub cfg: SacConfig,
    pub policy: GaussianPolicy,
    pub critics: TwinCritic,
    pub target_critics: TwinCritic,
    q1_opt: Adam,
    q2_opt: Adam,
    actor_opt: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    env_steps: u64,
    updates: u64,
    first_exception_update: Option<u64>,
}

impl SacAgent {
    pub fn new(spec: &EnvSpec, cfg: SacConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(spec.state_dim, &cfg.hidden, &spec.action_bounds, &mut rng);
        let critics = TwinCritic::new(spec.state_dim, spec.action_dim, &cfg.hidden, &mut rng);
        Self::from_parts(cfg, policy, critics, rng)
    }

    /// Builds an agent around given networks; target critics start as copies.
    pub fn from_parts(cfg: SacConfig, policy: GaussianPolicy, critics: TwinCritic, rng: ChaCha8Rng) -> Self {
        SacAgent {
            q1_opt: Adam::for_net(cfg.critic_lr, &critics.q1),
            q2_opt: Adam::for_net(cfg.critic_lr, &critics.q2),
            actor_opt: Adam::for_net(cfg.actor_lr, &policy.net),
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            target_critics: critics.clone(),
            cfg,
            policy,
            critics,
            rng,
            env_steps: 0,
            updates: 0,
            first_exception_update: None,
        }
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn push(&mut self, item: StoredTransition) {
        self.buffer.push(item);
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Index (0-based) of the first update whose batch held a handler-corrected row.
    pub fn first_exception_update(&self) -> Option<u64> {
        self.first_exception_update
    }

    /// One critic step, one actor step and a target-network update on `batch`.
    pub fn update_on(
        &mut self,
        batch: &SacBatch,
        noise_next: &Array2<f64>,
        noise_actor: &Array2<f64>,
    ) -> Result<SacDiagnostics, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        let td = self.cfg.td;
        let exception_rows = batch
            .terminations
            .iter()
            .filter(|k| k.is_exception(td.treat_time_limit_as_terminal))
            .count();
        if exception_rows > 0 && self.first_exception_update.is_none() {
            self.first_exception_update = Some(self.updates);
        }
        let y = critic_targets(
            &self.policy,
            &self.critics,
            &self.target_critics,
            batch,
            noise_next,
            self.cfg.alpha,
            &td,
        )?;
        let x = hcat(batch.states.view(), batch.actions.view());
        let scale = 2.0 / batch.len() as f64;
        let mut diag = SacDiagnostics {
            exception_rows,
            ..Default::default()
        };
        for (k, (net, opt)) in [
            (&mut self.critics.q1, &mut self.q1_opt),
            (&mut self.critics.q2, &mut self.q2_opt),
        ]
        .into_iter()
        .enumerate()
        {
            let cache = net.forward_cached(x.view())?;
            let err = &cache.output.column(0) - &y;
            if k == 0 {
                diag.mean_abs_td_error = err.mapv(f64::abs).mean().unwrap_or(0.0);
                diag.critic_loss = err.mapv(|e| e * e).mean().unwrap_or(0.0);
            }
            let og = (&err * scale).insert_axis(Axis(1));
            let g = net.backward_cached(&cache, og.view())?;
            opt.step(net, &g);
        }

        let (g, loss, entropy) =
            reparam_actor_gradient(&self.policy, &self.critics, batch.states.view(), noise_actor, self.cfg.alpha)?;
        self.actor_opt.step(&mut self.policy.net, &g);
        diag.actor_loss = loss;
        diag.entropy = entropy;

        self.target_critics.soft_update_from(&self.critics, self.cfg.polyak);
        self.updates += 1;
        if !self.critics.is_finite() || !diag.critic_loss.is_finite() {
            return Err(AgentError::Diverged { step: self.env_steps, what: "critic" });
        }
        if !self.policy.net.is_finite() {
            return Err(AgentError::Diverged { step: self.env_steps, what: "actor" });
        }
        Ok(diag)
    }

    /// Samples a batch from the buffer and updates on it.
    pub fn update(&mut self) -> Result<SacDiagnostics, AgentError> {
        let need = self.cfg.batch_size;
        let idx = self.buffer.sample_indices(need, &mut self.rng).ok_or(AgentError::NotEnoughSamples {
            have: self.buffer.len(),
            need,
        })?;
        let items: Vec<&StoredTransition> = idx.iter().map(|&i| self.buffer.get(i).expect("sampled index")).collect();
        let batch = SacBatch::from_transitions(&items);
        let d = self.policy.action_dim();
        let noise_next = Array2::from_shape_simple_fn((need, d), || self.rng.sample(StandardNormal));
        let noise_actor = Array2::from_shape_simple_fn((need, d), || self.rng.sample(StandardNormal));
        self.update_on(&batch, &noise_next, &noise_actor)
    }

    fn act(&mut self, spec: &EnvSpec, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>), AgentError> {
        if self.env_steps < self.cfg.warmup_steps {
            let a: Vec<f64> = spec
                .action_bounds
                .iter()
                .map(|&(lo, hi)| self.rng.random_range(lo..=hi))
                .collect();
            Ok((self.policy.unsquash(&a), a))
        } else {
            let s = self.policy.sample(state, &mut self.rng)?;
            Ok((s.raw, s.action))
        }
    }

    /// Trains for exactly `episodes` episodes, updating after every step once
    /// warm-up is over.
    pub fn train<E: Environment>(
        &mut self,
        env: E,
        episodes: usize,
        run_seed: u64,
        mut on_episode: impl FnMut(EpisodeLog),
    ) -> Result<(), AgentError> {
        let mut runner = EpisodeRunner::new(env, run_seed);
        let spec = runner.spec().clone();
        let mut meter = TdErrorMeter::default();
        while (runner.episodes_completed() as usize) < episodes {
            let state = runner.state().to_vec();
            let (raw, action) = self.act(&spec, &state)?;
            let (transition, end) = runner.step(&action)?;
            self.buffer.push(StoredTransition {
                transition,
                raw_action: raw,
            });
            self.env_steps += 1;
            if self.env_steps >= self.cfg.warmup_steps && self.buffer.len() >= self.cfg.batch_size {
                for _ in 0..self.cfg.updates_per_step {
                    meter.add(self.update()?.mean_abs_td_error);
                }
            }
            if let Some(end) = end {
                on_episode(EpisodeLog {
                    end,
                    mean_td_error: meter.take(),
                });
            }
        }
        Ok(())
    }
}
