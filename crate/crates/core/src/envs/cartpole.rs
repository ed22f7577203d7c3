use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::td::TerminationKind;

/// Cart-pole constants; semi-implicit Euler at `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force_scale: f64,
    pub dt: f64,
    pub track_limit: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force_scale: 10.0,
            dt: 0.02,
            track_limit: 2.4,
        }
    }
}

/// `[x, x_dot, theta, theta_dot]`, theta measured from upright.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct CartPoleState {
    x: f64,
    x_dot: f64,
    theta: f64,
    theta_dot: f64,
}

impl CartPoleState {
    fn advance(&mut self, p: &CartPoleParams, action: f64) {
        let force = p.force_scale * action;
        let total_mass = p.cart_mass + p.pole_mass;
        let pole_ml = p.pole_mass * p.half_length;
        let (sin, cos) = self.theta.sin_cos();
        let temp = (force + pole_ml * self.theta_dot * self.theta_dot * sin) / total_mass;
        let theta_acc = (p.gravity * sin - cos * temp)
            / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pole_ml * theta_acc * cos / total_mass;
        self.x_dot += p.dt * x_acc;
        self.x += p.dt * self.x_dot;
        self.theta_dot += p.dt * theta_acc;
        self.theta += p.dt * self.theta_dot;
    }
}

fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Balance a pole that starts near upright. Fails when the pole leaves
/// `±angle_limit` or the cart leaves the track.
///
/// Native reward is `9.5 - 5 (θ/θ_max)² - 4 (x/x_max)²` with both ratios capped
/// at one, so every reward lies in `[0.5, 9.5]` and the upright rest state pays
/// the full alive bonus.
#[derive(Debug, Clone)]
pub struct PendulumBalance {
    spec: EnvSpec,
    params: CartPoleParams,
    angle_limit: f64,
    state: CartPoleState,
    clock: EpisodeClock,
}

impl PendulumBalance {
    pub const NAME: &'static str = "pendulum-balance";
    pub const ALIVE_BONUS: f64 = 9.5;
    pub const ANGLE_LIMIT: f64 = 0.2;

    pub fn new(max_steps: usize) -> Self {
        PendulumBalance {
            spec: EnvSpec {
                name: Self::NAME.to_string(),
                state_dim: 4,
                action_dim: 1,
                action_bounds: vec![(-1.0, 1.0)],
                max_steps,
                reward_range: (Self::ALIVE_BONUS - 9.0, Self::ALIVE_BONUS),
            },
            params: CartPoleParams::default(),
            angle_limit: Self::ANGLE_LIMIT,
            state: CartPoleState::default(),
            clock: EpisodeClock::default(),
        }
    }

    /// Starts from an explicit `[x, x_dot, theta, theta_dot]`.
    pub fn reset_to(&mut self, state: [f64; 4]) -> Vec<f64> {
        self.clock.restart();
        self.state = CartPoleState {
            x: state[0],
            x_dot: state[1],
            theta: state[2],
            theta_dot: state[3],
        };
        self.observe()
    }

    pub fn pole_angle(&self) -> f64 {
        self.state.theta
    }

    fn observe(&self) -> Vec<f64> {
        let s = self.state;
        vec![s.x, s.x_dot, s.theta, s.theta_dot]
    }

    fn reward(&self) -> f64 {
        let angle = (self.state.theta / self.angle_limit).powi(2).min(1.0);
        let position = (self.state.x / self.params.track_limit).powi(2).min(1.0);
        Self::ALIVE_BONUS - 5.0 * angle - 4.0 * position
    }
}

impl Default for PendulumBalance {
    fn default() -> Self {
        PendulumBalance::new(200)
    }
}

impl Environment for PendulumBalance {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || rng.random_range(-0.05..0.05);
        let state = [draw(), draw(), draw(), draw()];
        self.reset_to(state)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        self.clock.check(&self.spec, action)?;
        let a = self.spec.clamp_action(action)[0];
        self.state.advance(&self.params, a);
        let failed = self.state.theta.abs() > self.angle_limit
            || self.state.x.abs() > self.params.track_limit;
        let task = if failed {
            TerminationKind::Failure
        } else {
            TerminationKind::NotTerminal
        };
        let termination = self.clock.tick(&self.spec, task);
        Ok(StepResult {
            next_state: self.observe(),
            reward: self.reward(),
            termination,
        })
    }
}

/// Swing-up from hanging down with a sparse reward: 1 while the pole is within
/// `±band` of upright, 0 otherwise. The only failure is leaving the track.
///
/// Observation is `[x, x_dot, cos θ, sin θ, θ_dot]`.
#[derive(Debug, Clone)]
pub struct SparseCartPole {
    spec: EnvSpec,
    params: CartPoleParams,
    band: f64,
    state: CartPoleState,
    clock: EpisodeClock,
}

impl SparseCartPole {
    pub const NAME: &'static str = "sparse-cartpole";
    pub const BAND: f64 = 0.05;

    pub fn new(max_steps: usize) -> Self {
        SparseCartPole {
            spec: EnvSpec {
                name: Self::NAME.to_string(),
                state_dim: 5,
                action_dim: 1,
                action_bounds: vec![(-1.0, 1.0)],
                max_steps,
                reward_range: (0.0, 1.0),
            },
            params: CartPoleParams::default(),
            band: Self::BAND,
            state: CartPoleState::default(),
            clock: EpisodeClock::default(),
        }
    }

    pub fn reset_to(&mut self, state: [f64; 4]) -> Vec<f64> {
        self.clock.restart();
        self.state = CartPoleState {
            x: state[0],
            x_dot: state[1],
            theta: state[2],
            theta_dot: state[3],
        };
        self.observe()
    }

    fn observe(&self) -> Vec<f64> {
        let s = self.state;
        vec![s.x, s.x_dot, s.theta.cos(), s.theta.sin(), s.theta_dot]
    }
}

impl Default for SparseCartPole {
    fn default() -> Self {
        SparseCartPole::new(200)
    }
}

impl Environment for SparseCartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = [
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            PI + rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
        ];
        self.reset_to(state)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        self.clock.check(&self.spec, action)?;
        let a = self.spec.clamp_action(action)[0];
        self.state.advance(&self.params, a);
        let task = if self.state.x.abs() > self.params.track_limit {
            TerminationKind::Failure
        } else {
            TerminationKind::NotTerminal
        };
        let termination = self.clock.tick(&self.spec, task);
        let reward = if wrap_angle(self.state.theta).abs() < self.band { 1.0 } else { 0.0 };
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            termination,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{apply_offset, OffsetConfig};

    #[test]
    fn reset_is_near_upright_and_deterministic() {
        let mut env = PendulumBalance::default();
        let s = env.reset(0);
        assert!(s[2].abs() <= 0.05);
        assert!(s[1].abs() <= 0.05 && s[3].abs() <= 0.05);
        assert_eq!(env.reset(7), env.reset(7));
        assert_ne!(env.reset(7), env.reset(8));
    }

    #[test]
    fn upright_rest_is_an_equilibrium() {
        let mut env = PendulumBalance::default();
        env.reset_to([0.0; 4]);
        let res = env.step(&[0.0]).unwrap();
        assert_eq!(res.termination, TerminationKind::NotTerminal);
        assert_eq!(res.reward, PendulumBalance::ALIVE_BONUS);
        assert_eq!(res.next_state, vec![0.0; 4]);
    }

    #[test]
    fn falling_pole_is_failure() {
        let mut env = PendulumBalance::default();
        env.reset_to([0.0, 0.0, 0.15, 0.5]);
        let mut last = None;
        for _ in 0..200 {
            let res = env.step(&[0.0]).unwrap();
            let done = res.termination.ends_episode();
            last = Some(res);
            if done {
                break;
            }
        }
        let last = last.unwrap();
        assert_eq!(last.termination, TerminationKind::Failure);
        assert!(env.pole_angle().abs() > PendulumBalance::ANGLE_LIMIT);
    }

    #[test]
    fn out_of_bounds_action_is_clamped() {
        let mut a = PendulumBalance::default();
        let mut b = PendulumBalance::default();
        a.reset_to([0.0; 4]);
        b.reset_to([0.0; 4]);
        assert_eq!(a.step(&[50.0]).unwrap(), b.step(&[1.0]).unwrap());
    }

    #[test]
    fn time_limit_at_cap() {
        let mut env = PendulumBalance::new(3);
        env.reset_to([0.0; 4]);
        assert_eq!(env.step(&[0.0]).unwrap().termination, TerminationKind::NotTerminal);
        assert_eq!(env.step(&[0.0]).unwrap().termination, TerminationKind::NotTerminal);
        assert_eq!(env.step(&[0.0]).unwrap().termination, TerminationKind::TimeLimit);
    }

    #[test]
    fn offsets_make_rewards_sign_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut env = PendulumBalance::default();
        let (pos, neg) = env.spec().sign_definite_offsets();
        assert_eq!((pos, neg), (0.0, -10.0));
        for episode in 0..10_000u64 {
            env.reset(episode);
            loop {
                let res = env.step(&[rng.random_range(-1.0..1.0)]).unwrap();
                let done = res.termination.ends_episode();
                assert!(apply_offset(res.clone(), OffsetConfig { offset: pos }).reward > 0.0);
                assert!(apply_offset(res, OffsetConfig { offset: neg }).reward < 0.0);
                if done {
                    break;
                }
            }
        }
    }

    #[test]
    fn sparse_reward_only_near_upright() {
        let mut env = SparseCartPole::default();
        let s = env.reset(1);
        assert!(s[2] < -0.99, "starts hanging down");
        assert_eq!(env.step(&[0.0]).unwrap().reward, 0.0);
        env.reset_to([0.0, 0.0, 0.01, 0.0]);
        assert_eq!(env.step(&[0.0]).unwrap().reward, 1.0);
        env.reset_to([0.0, 0.0, 2.0 * PI + 0.01, 0.0]);
        assert_eq!(env.step(&[0.0]).unwrap().reward, 1.0);
    }

    #[test]
    fn sparse_cart_leaving_track_fails() {
        let mut env = SparseCartPole::default();
        env.reset_to([2.39, 5.0, PI, 0.0]);
        assert_eq!(env.step(&[1.0]).unwrap().termination, TerminationKind::Failure);
    }
}
