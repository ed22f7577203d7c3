use ndarray::{array, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use termlab::agents::sac::{critic_targets, reparam_actor_gradient, SacBatch};
use termlab::agents::{
    collect_rollout, pg::pg_actor_gradient, AgentError, ActionCritic, EpisodeRunner, GaussianPolicy, PgAgent,
    PgConfig, RolloutBatch, RolloutStep, SacAgent, SacConfig, StoredTransition, TwinCritic,
};
use termlab::envs::{Environment, PendulumBalance};
use termlab::nn::{Activation, Adam, Dense, Init, Mlp};
use termlab::{Handler, TdConfig, TerminationKind, Transition};

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

fn jitter(net: &mut Mlp, scale: f64, rng: &mut impl Rng) {
    let p: Vec<f64> = net
        .params_flat()
        .iter()
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    net.set_params_flat(&p).unwrap();
}

#[test]
fn pg_gradient_is_advantage_times_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut policy = GaussianPolicy::new(3, &[6], &[(-2.0, 2.0), (-1.0, 1.0)], &mut rng);
    jitter(&mut policy.net, 0.3, &mut rng);
    let state = [0.3, -0.5, 0.8];
    let draw = policy.sample(&state, &mut rng).unwrap();
    let (y, v) = (2.5, 0.8);
    let states = Array2::from_shape_vec((1, 3), state.to_vec()).unwrap();
    let raws = Array2::from_shape_vec((1, 2), draw.raw.clone()).unwrap();
    let (g, _, clipped) = pg_actor_gradient(
        &policy,
        states.view(),
        raws.view(),
        array![draw.log_prob].view(),
        array![y - v].view(),
        0.2,
    )
    .unwrap();
    assert_eq!(clipped, 0.0);
    let analytic = g.flat();
    let params = policy.net.params_flat();
    let mut probe = policy.clone();
    let h = 1e-6;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += h;
        probe.net.set_params_flat(&p).unwrap();
        let up = probe.log_prob(&state, &draw.raw).unwrap();
        p[i] -= 2.0 * h;
        probe.net.set_params_flat(&p).unwrap();
        let down = probe.log_prob(&state, &draw.raw).unwrap();
        // loss gradient: descent direction of -(y - V) ln π
        let expected = -(y - v) * (up - down) / (2.0 * h);
        assert!((analytic[i] - expected).abs() <= 1e-6 * (1.0 + expected.abs()), "param {i}: {} vs {expected}", analytic[i]);
    }
}

#[test]
fn zero_advantage_gives_zero_pg_gradient_on_a_real_batch() {
    let env = PendulumBalance::default();
    let mut agent = PgAgent::new(env.spec(), PgConfig::new(TdConfig::new(Handler::Zero)), 4);
    let mut runner = EpisodeRunner::new(env, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let batch = collect_rollout(&mut runner, &agent.policy, &agent.critic, 40, None, &agent.cfg.td, &mut rng).unwrap();
    let lp: Array1<f64> = batch.steps.iter().map(|s| s.log_prob).collect();
    let (g, _, _) = pg_actor_gradient(
        &agent.policy,
        batch.states().view(),
        batch.raw_actions().view(),
        lp.view(),
        Array1::zeros(batch.len()).view(),
        0.2,
    )
    .unwrap();
    assert!(g.flat().iter().all(|&x| x == 0.0));
    agent.update(&batch).unwrap();
}

#[test]
fn zero_handler_lowers_the_advantage_of_a_negative_failure() {
    let mut batch = RolloutBatch {
        steps: vec![RolloutStep {
            transition: Transition {
                state: vec![0.0; 4],
                action: vec![0.0],
                reward: -1.0,
                next_state: vec![0.1; 4],
                termination: TerminationKind::Failure,
            },
            raw_action: vec![0.0],
            log_prob: 0.0,
            value: 0.4,
            next_value: 2.0,
            target: 0.0,
        }],
        episodes: vec![],
    };
    let adv = |b: &RolloutBatch| b.steps[0].target - b.steps[0].value;
    batch.recompute_targets(&TdConfig::new(Handler::Zero)).unwrap();
    let zero = adv(&batch);
    batch.recompute_targets(&TdConfig::new(Handler::Ignore)).unwrap();
    let ignore = adv(&batch);
    assert_eq!(zero, -1.0 - 0.4);
    assert!((ignore - (-1.0 + 0.99 * 2.0 - 0.4)).abs() < 1e-15);
    assert!(zero < ignore);
}

fn random_batch(n: usize, sd: usize, ad: usize, kinds: &[TerminationKind], rng: &mut impl Rng) -> SacBatch {
    let m = |r: usize, c: usize, rng: &mut dyn rand::RngCore| {
        Array2::from_shape_simple_fn((r, c), || rng.sample::<f64, _>(StandardNormal))
    };
    let raws = m(n, ad, rng);
    SacBatch {
        states: m(n, sd, rng),
        actions: raws.mapv(f64::tanh),
        raws,
        rewards: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        next_states: m(n, sd, rng),
        terminations: (0..n).map(|i| kinds[i % kinds.len()]).collect(),
    }
}

/// Pre-squash draw `μ + σ ε` and its action, computed straight from the actor outputs.
fn draw(policy: &GaussianPolicy, state: &[f64], eps: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let out = policy.net.forward(state).unwrap();
    let d = eps.len();
    let raw: Vec<f64> = (0..d).map(|j| out[j] + out[d + j].clamp(-5.0, 2.0).exp() * eps[j]).collect();
    let bounds = policy.bounds();
    let act = raw
        .iter()
        .zip(&bounds)
        .map(|(u, &(lo, hi))| 0.5 * (lo + hi) + 0.5 * (hi - lo) * u.tanh())
        .collect();
    (raw, act)
}

#[test]
fn zero_temperature_identical_twins_bootstrap_from_q() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (sd, ad) = (3, 2);
    let mut policy = GaussianPolicy::new(sd, &[5], &[(-1.0, 1.0), (0.0, 4.0)], &mut rng);
    jitter(&mut policy.net, 0.4, &mut rng);
    let q = Mlp::new(&[sd + ad, 7, 1], Activation::Relu, Init::CRITIC, &mut rng);
    let twins = TwinCritic { q1: q.clone(), q2: q };
    let batch = random_batch(6, sd, ad, &[TerminationKind::NotTerminal], &mut rng);
    let noise = Array2::from_shape_simple_fn((6, ad), || rng.sample::<f64, _>(StandardNormal));
    for handler in Handler::ALL {
        let td = TdConfig::new(handler).with_gamma(0.9);
        let y = critic_targets(&policy, &twins, &twins, &batch, &noise, 0.0, &td).unwrap();
        for i in 0..6 {
            let s_next = batch.next_states.row(i).to_vec();
            let (_, a_next) = draw(&policy, &s_next, &noise.row(i).to_vec());
            let x: Vec<f64> = s_next.iter().chain(&a_next).copied().collect();
            let expected = batch.rewards[i] + 0.9 * twins.q1.forward(&x).unwrap()[0];
            assert!((y[i] - expected).abs() < 1e-12, "{handler} row {i}");
        }
    }
}

#[test]
fn underest_with_zero_lambda_matches_ignore_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut policy = GaussianPolicy::new(2, &[4], &[(-1.0, 1.0)], &mut rng);
    jitter(&mut policy.net, 0.4, &mut rng);
    let online = TwinCritic::new(2, 1, &[6], &mut rng);
    let target = TwinCritic::new(2, 1, &[6], &mut rng);
    let kinds = [TerminationKind::Failure, TerminationKind::TimeLimit, TerminationKind::Success, TerminationKind::NotTerminal];
    let batch = random_batch(12, 2, 1, &kinds, &mut rng);
    let noise = Array2::from_shape_simple_fn((12, 1), || rng.sample::<f64, _>(StandardNormal));
    let ignore = critic_targets(&policy, &online, &target, &batch, &noise, 0.2, &TdConfig::new(Handler::Ignore)).unwrap();
    let under0 = critic_targets(
        &policy,
        &online,
        &target,
        &batch,
        &noise,
        0.2,
        &TdConfig::new(Handler::Underest).with_lambda(0.0),
    )
    .unwrap();
    assert_eq!(ignore, under0);
    let under = critic_targets(&policy, &online, &target, &batch, &noise, 0.2, &TdConfig::new(Handler::Underest)).unwrap();
    for i in 0..12 {
        match batch.terminations[i] {
            TerminationKind::NotTerminal => assert_eq!(under[i], ignore[i]),
            _ => assert!(under[i] <= ignore[i]),
        }
    }
}

/// Hand-set 2-2-1 ReLU critic: returns `(W1 as [[in][out]], b1, w2, b2)`.
type Tiny = ([[f64; 2]; 2], [f64; 2], [f64; 2], f64);

fn tiny_net(t: &Tiny) -> Mlp {
    let (w1, b1, w2, b2) = t;
    Mlp::from_layers(
        vec![
            Dense {
                weights: array![[w1[0][0], w1[0][1]], [w1[1][0], w1[1][1]]],
                bias: array![b1[0], b1[1]],
            },
            Dense {
                weights: array![[w2[0]], [w2[1]]],
                bias: array![*b2],
            },
        ],
        Activation::Relu,
    )
    .unwrap()
}

fn tiny_forward(t: &Tiny, x: [f64; 2]) -> (f64, [f64; 2]) {
    let (w1, b1, w2, b2) = t;
    let mut z = [0.0; 2];
    for j in 0..2 {
        z[j] = x[0] * w1[0][j] + x[1] * w1[1][j] + b1[j];
    }
    let h = [z[0].max(0.0), z[1].max(0.0)];
    (h[0] * w2[0] + h[1] * w2[1] + b2, z)
}

/// Gradient of `mean((Q - y)²)` in `Mlp::params_flat` order.
fn tiny_grad(t: &Tiny, xs: &[[f64; 2]], ys: &[f64]) -> Vec<f64> {
    let w2 = t.2;
    let n = xs.len() as f64;
    let mut g = vec![0.0; 9];
    for (x, &y) in xs.iter().zip(ys) {
        let (q, z) = tiny_forward(t, *x);
        let dq = 2.0 * (q - y) / n;
        let h = [z[0].max(0.0), z[1].max(0.0)];
        for j in 0..2 {
            let dz = if z[j] > 0.0 { dq * w2[j] } else { 0.0 };
            g[j] += x[0] * dz;
            g[2 + j] += x[1] * dz;
            g[4 + j] += dz;
            g[6 + j] += dq * h[j];
        }
        g[8] += dq;
    }
    g
}

fn tiny_params(t: &Tiny) -> Vec<f64> {
    let (w1, b1, w2, b2) = t;
    vec![w1[0][0], w1[0][1], w1[1][0], w1[1][1], b1[0], b1[1], w2[0], w2[1], *b2]
}

fn tiny_from(p: &[f64]) -> Tiny {
    ([[p[0], p[1]], [p[2], p[3]]], [p[4], p[5]], [p[6], p[7]], p[8])
}

#[test]
fn two_critic_steps_match_a_hand_rolled_reference() {
    let (mu, ls) = (0.2, -0.5);
    let policy = GaussianPolicy::from_net(
        Mlp::from_layers(
            vec![Dense {
                weights: Array2::zeros((1, 2)),
                bias: array![mu, ls],
            }],
            Activation::Tanh,
        )
        .unwrap(),
        &[(-1.0, 1.0)],
    );
    let c1: Tiny = ([[0.8, -0.3], [0.5, 0.9]], [0.1, 0.4], [1.2, -0.7], 0.05);
    let c2: Tiny = ([[-0.6, 0.4], [0.7, 0.2]], [0.3, 0.2], [0.9, 0.8], -0.1);
    let critics = TwinCritic {
        q1: tiny_net(&c1),
        q2: tiny_net(&c2),
    };
    let (gamma, alpha, lr) = (0.9, 0.1, 0.01);
    let mut cfg = SacConfig::new(TdConfig::new(Handler::Ignore).with_gamma(gamma));
    cfg.alpha = alpha;
    cfg.actor_lr = 0.0;
    cfg.critic_lr = lr;
    cfg.polyak = 1.0;
    let mut agent = SacAgent::from_parts(cfg, policy, critics, ChaCha8Rng::seed_from_u64(0));

    let s = [0.5, -0.4];
    let a = [0.3, -0.6];
    let r = [1.0, -0.5];
    let s_next = [-0.2, 0.7];
    let eps = [0.3, -1.1];
    let batch = SacBatch {
        states: array![[s[0]], [s[1]]],
        actions: array![[a[0]], [a[1]]],
        raws: array![[a[0].atanh()], [a[1].atanh()]],
        rewards: array![r[0], r[1]],
        next_states: array![[s_next[0]], [s_next[1]]],
        terminations: vec![TerminationKind::NotTerminal; 2],
    };
    let noise_next = array![[eps[0]], [eps[1]]];
    let noise_actor = array![[0.7], [-0.2]];

    // reference targets: frozen target critics and a frozen actor
    let sigma = f64::exp(ls);
    let ys: Vec<f64> = (0..2)
        .map(|i| {
            let u: f64 = mu + sigma * eps[i];
            let a_next = u.tanh();
            let log_pi = -0.5 * eps[i] * eps[i] - ls - HALF_LN_TWO_PI - (1.0 - a_next * a_next).ln();
            let q = tiny_forward(&c1, [s_next[i], a_next]).0.min(tiny_forward(&c2, [s_next[i], a_next]).0);
            r[i] + gamma * (q - alpha * log_pi)
        })
        .collect();
    let xs = [[s[0], a[0]], [s[1], a[1]]];

    let reference = |c: &Tiny| {
        let (b1, b2, e) = (0.9, 0.999, 1e-8);
        let p0 = tiny_params(c);
        let g1 = tiny_grad(c, &xs, &ys);
        let p1: Vec<f64> = p0.iter().zip(&g1).map(|(p, g)| p - lr * g / (g.abs() + e)).collect();
        let g2 = tiny_grad(&tiny_from(&p1), &xs, &ys);
        let p2: Vec<f64> = (0..9)
            .map(|k| {
                let m = b1 * (1.0 - b1) * g1[k] + (1.0 - b1) * g2[k];
                let v = b2 * (1.0 - b2) * g1[k] * g1[k] + (1.0 - b2) * g2[k] * g2[k];
                let m_hat = m / (1.0 - b1 * b1);
                let v_hat = v / (1.0 - b2 * b2);
                p1[k] - lr * m_hat / (v_hat.sqrt() + e)
            })
            .collect();
        (p1, p2)
    };
    let (q1_after1, q1_after2) = reference(&c1);
    let (q2_after1, q2_after2) = reference(&c2);

    agent.update_on(&batch, &noise_next, &noise_actor).unwrap();
    for (got, want) in [(agent.critics.q1.params_flat(), &q1_after1), (agent.critics.q2.params_flat(), &q2_after1)] {
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }
    agent.update_on(&batch, &noise_next, &noise_actor).unwrap();
    for (got, want) in [(agent.critics.q1.params_flat(), &q1_after2), (agent.critics.q2.params_flat(), &q2_after2)] {
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{got:?} vs {want:?}");
        }
    }
    assert_eq!(agent.policy.net.params_flat(), vec![0.0, 0.0, mu, ls]);
}

#[test]
fn handlers_stay_in_lockstep_until_a_terminal_is_trained_on() {
    let env = PendulumBalance::default();
    let mut cfg = SacConfig::new(TdConfig::new(Handler::Ignore));
    cfg.hidden = vec![8];
    cfg.batch_size = 16;
    cfg.warmup_steps = 0;
    let mut agents: Vec<SacAgent> = Handler::ALL
        .iter()
        .map(|&h| {
            let mut c = cfg.clone();
            c.td.handler = h;
            SacAgent::new(env.spec(), c, 21)
        })
        .collect();
    let mut runners: Vec<_> = (0..3).map(|_| EpisodeRunner::new(PendulumBalance::default(), 21)).collect();
    let mut rngs: Vec<_> = (0..3).map(|_| ChaCha8Rng::seed_from_u64(5)).collect();
    let mut first_update_step = None;
    for step in 0..2000 {
        let mut transitions = Vec::new();
        for k in 0..3 {
            let sample = agents[k].policy.sample(runners[k].state(), &mut rngs[k]).unwrap();
            let (t, _) = runners[k].step(&sample.action).unwrap();
            transitions.push(t.clone());
            agents[k].push(StoredTransition {
                transition: t,
                raw_action: sample.raw,
            });
            if agents[k].buffer().len() >= 16 {
                agents[k].update().unwrap();
            }
        }
        let firsts: Vec<_> = agents.iter().map(|a| a.first_exception_update()).collect();
        assert!(firsts.iter().all(|f| *f == firsts[0]), "handlers saw different batches");
        if first_update_step.is_none() {
            assert!(transitions.iter().all(|t| *t == transitions[0]), "step {step} diverged early");
            if firsts[0].is_some() {
                first_update_step = Some(step);
            } else {
                assert!(agents.iter().all(|a| a.critics == agents[0].critics && a.policy == agents[0].policy));
            }
        }
    }
    assert!(first_update_step.is_some(), "no terminal was ever sampled");
    let (zero, ignore, under) = (&agents[0], &agents[1], &agents[2]);
    assert_ne!(zero.critics, ignore.critics);
    assert_ne!(under.critics, ignore.critics);
}

#[test]
fn critic_regression_is_monotone_on_a_frozen_batch() {
    let env = PendulumBalance::default();
    let mut agent = PgAgent::new(env.spec(), PgConfig::new(TdConfig::new(Handler::Underest)), 6);
    let mut runner = EpisodeRunner::new(env, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let batch = collect_rollout(&mut runner, &agent.policy, &agent.critic, 512, None, &agent.cfg.td, &mut rng).unwrap();
    let states = batch.states();
    let targets: Array1<f64> = batch.steps.iter().map(|s| s.target).collect();
    let mut last = f64::INFINITY;
    for k in 0..100 {
        let loss = agent.critic_step(states.view(), targets.view()).unwrap();
        assert!(loss <= last, "step {k}: {loss} > {last}");
        last = loss;
    }
    assert!(matches!(
        agent.critic_step(Array2::zeros((0, 4)).view(), Array1::zeros(0).view()),
        Err(AgentError::EmptyBatch)
    ));
}

/// Single-state bandit with value `-2 (a - 0.3)²`.
struct Bandit;

impl ActionCritic for Bandit {
    fn min_value_and_action_grad(
        &self,
        _states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<(Array1<f64>, Array2<f64>), AgentError> {
        let q = actions.column(0).mapv(|a| -2.0 * (a - 0.3) * (a - 0.3));
        let g = actions.mapv(|a| -4.0 * (a - 0.3));
        Ok((q, g))
    }
}

#[test]
fn higher_temperature_never_lowers_entropy() {
    let state = [1.0];
    let states = Array2::from_elem((64, 1), 1.0);
    let mut entropies = Vec::new();
    for alpha in [0.01, 0.05, 0.2, 0.8] {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut policy = GaussianPolicy::new(1, &[8], &[(-1.0, 1.0)], &mut rng);
        let mut opt = Adam::for_net(3e-3, &policy.net);
        for _ in 0..1500 {
            let noise = Array2::from_shape_simple_fn((64, 1), || rng.sample::<f64, _>(StandardNormal));
            let (g, _, _) = reparam_actor_gradient(&policy, &Bandit, states.view(), &noise, alpha).unwrap();
            opt.step(&mut policy.net, &g);
        }
        entropies.push(policy.entropy_estimate(&state, 20_000, &mut rng).unwrap());
    }
    assert!(entropies.windows(2).all(|w| w[1] >= w[0]), "{entropies:?}");
}

#[test]
fn squashed_density_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for bounds in [vec![(-2.0, 2.0)], vec![(-1.0, 1.0), (0.0, 3.0)]] {
        let mut policy = GaussianPolicy::new(3, &[6], &bounds, &mut rng);
        jitter(&mut policy.net, 0.25, &mut rng);
        let state: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let volume: f64 = bounds.iter().map(|(lo, hi)| hi - lo).product();
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let a: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
            acc += policy.log_prob_of_action(&state, &a).unwrap().exp();
        }
        let integral = volume * acc / n as f64;
        assert!((integral - 1.0).abs() <= 0.02, "{bounds:?}: {integral}");
    }
}
