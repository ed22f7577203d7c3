use super::{EnvError, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::td::TerminationKind;

/// The two moves available in every corridor cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliffMove {
    /// Advance one cell.
    Step,
    /// Advance two cells, skipping the next one.
    Jump,
}

impl CliffMove {
    pub const ALL: [CliffMove; 2] = [CliffMove::Step, CliffMove::Jump];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        CliffMove::ALL[i]
    }

    /// Continuous encoding: negative means step, non-negative means jump.
    pub fn from_action(a: f64) -> Self {
        if a < 0.0 {
            CliffMove::Step
        } else {
            CliffMove::Jump
        }
    }

    pub fn to_action(self) -> f64 {
        match self {
            CliffMove::Step => -1.0,
            CliffMove::Jump => 1.0,
        }
    }
}

/// Layout of the cliff corridor.
///
/// Cells `0..length`; the agent starts at 0 and the last cell is the goal.
/// Every move costs `step_reward` except the move that enters the goal, which
/// pays `goal_reward`. Landing on a cliff cell ends the episode as a failure.
/// Jumps past the goal stop at the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffLayout {
    pub length: usize,
    pub cliffs: Vec<usize>,
    pub step_reward: f64,
    pub goal_reward: f64,
}

impl Default for CliffLayout {
    fn default() -> Self {
        CliffLayout {
            length: 8,
            cliffs: vec![2, 5],
            step_reward: -1.0,
            goal_reward: 0.0,
        }
    }
}

impl CliffLayout {
    pub fn goal(&self) -> usize {
        self.length - 1
    }

    pub fn is_cliff(&self, cell: usize) -> bool {
        self.cliffs.contains(&cell)
    }

    /// Terminal kind of entering `cell`.
    pub fn cell_kind(&self, cell: usize) -> TerminationKind {
        if self.is_cliff(cell) {
            TerminationKind::Failure
        } else if cell == self.goal() {
            TerminationKind::Success
        } else {
            TerminationKind::NotTerminal
        }
    }

    /// `(next cell, reward, terminal kind)` for a move from a non-terminal cell.
    pub fn transition(&self, cell: usize, mv: CliffMove) -> (usize, f64, TerminationKind) {
        let stride = match mv {
            CliffMove::Step => 1,
            CliffMove::Jump => 2,
        };
        let next = (cell + stride).min(self.goal());
        let kind = self.cell_kind(next);
        let reward = if kind == TerminationKind::Success {
            self.goal_reward
        } else {
            self.step_reward
        };
        (next, reward, kind)
    }
}

/// The cliff corridor as a step-based environment with one-hot observations.
#[derive(Debug, Clone)]
pub struct CliffChain {
    spec: EnvSpec,
    layout: CliffLayout,
    cell: usize,
    clock: EpisodeClock,
}

impl CliffChain {
    pub const NAME: &'static str = "cliff-chain";

    pub fn new(layout: CliffLayout, max_steps: usize) -> Self {
        let lo = layout.step_reward.min(layout.goal_reward);
        let hi = layout.step_reward.max(layout.goal_reward);
        CliffChain {
            spec: EnvSpec {
                name: Self::NAME.to_string(),
                state_dim: layout.length,
                action_dim: 1,
                action_bounds: vec![(-1.0, 1.0)],
                max_steps,
                reward_range: (lo, hi),
            },
            layout,
            cell: 0,
            clock: EpisodeClock::default(),
        }
    }

    pub fn layout(&self) -> &CliffLayout {
        &self.layout
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    fn observe(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.layout.length];
        v[self.cell] = 1.0;
        v
    }
}

impl Default for CliffChain {
    fn default() -> Self {
        CliffChain::new(CliffLayout::default(), 50)
    }
}

impl Environment for CliffChain {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.clock.restart();
        self.cell = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        self.clock.check(&self.spec, action)?;
        let (next, reward, kind) = self.layout.transition(self.cell, CliffMove::from_action(action[0]));
        self.cell = next;
        let termination = self.clock.tick(&self.spec, kind);
        Ok(StepResult {
            next_state: self.observe(),
            reward,
            termination,
        })
    }
}
