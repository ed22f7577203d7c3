use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvError, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::td::TerminationKind;

const LINK_1: f64 = 0.1;
const LINK_2: f64 = 0.11;
const TARGET_RADIUS: f64 = 0.2;
const TORQUE_GAIN: f64 = 20.0;
const DAMPING: f64 = 2.0;
const MAX_SPEED: f64 = 10.0;
const CONTROL_COST: f64 = 0.1;
const DT: f64 = 0.02;

/// Planar two-link arm moving its fingertip to a random target.
///
/// Kinematic dynamics with velocity damping; ends only at the time limit.
/// Native reward is `-‖fingertip - target‖ - 0.1 ‖a‖²`.
///
/// Observation: `[cos q1, sin q1, cos q2, sin q2, q1_dot, q2_dot, tx, ty, dx, dy]`
/// where `(dx, dy)` is fingertip minus target.
#[derive(Debug, Clone)]
pub struct Reacher2Link {
    spec: EnvSpec,
    q: [f64; 2],
    q_dot: [f64; 2],
    target: [f64; 2],
    clock: EpisodeClock,
}

impl Reacher2Link {
    pub const NAME: &'static str = "reacher-2link";

    pub fn new(max_steps: usize) -> Self {
        let max_dist = LINK_1 + LINK_2 + TARGET_RADIUS;
        Reacher2Link {
            spec: EnvSpec {
                name: Self::NAME.to_string(),
                state_dim: 10,
                action_dim: 2,
                action_bounds: vec![(-1.0, 1.0); 2],
                max_steps,
                reward_range: (-max_dist - 2.0 * CONTROL_COST, 0.0),
            },
            q: [0.0; 2],
            q_dot: [0.0; 2],
            target: [0.0; 2],
            clock: EpisodeClock::default(),
        }
    }

    pub fn fingertip(&self) -> [f64; 2] {
        let [q1, q2] = self.q;
        [
            LINK_1 * q1.cos() + LINK_2 * (q1 + q2).cos(),
            LINK_1 * q1.sin() + LINK_2 * (q1 + q2).sin(),
        ]
    }

    fn distance(&self) -> f64 {
        let f = self.fingertip();
        ((f[0] - self.target[0]).powi(2) + (f[1] - self.target[1]).powi(2)).sqrt()
    }

    fn observe(&self) -> Vec<f64> {
        let f = self.fingertip();
        vec![
            self.q[0].cos(),
            self.q[0].sin(),
            self.q[1].cos(),
            self.q[1].sin(),
            self.q_dot[0],
            self.q_dot[1],
            self.target[0],
            self.target[1],
            f[0] - self.target[0],
            f[1] - self.target[1],
        ]
    }
}

impl Default for Reacher2Link {
    fn default() -> Self {
        Reacher2Link::new(200)
    }
}

impl Environment for Reacher2Link {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.clock.restart();
        self.q = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];
        self.q_dot = [rng.random_range(-0.005..0.005), rng.random_range(-0.005..0.005)];
        let radius = TARGET_RADIUS * rng.random::<f64>().sqrt();
        let angle = rng.random_range(-PI..PI);
        self.target = [radius * angle.cos(), radius * angle.sin()];
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        self.clock.check(&self.spec, action)?;
        let a = self.spec.clamp_action(action);
        for j in 0..2 {
            let acc = TORQUE_GAIN * a[j] - DAMPING * self.q_dot[j];
            self.q_dot[j] = (self.q_dot[j] + DT * acc).clamp(-MAX_SPEED, MAX_SPEED);
            self.q[j] += DT * self.q_dot[j];
        }
        let control: f64 = a.iter().map(|x| x * x).sum();
        let reward = -self.distance() - CONTROL_COST * control;
        let termination = self.clock.tick(&self.spec, TerminationKind::NotTerminal);
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            termination,
        })
    }
}
