use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::{CliffLayout, CliffMove};
use crate::td::TerminationKind;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid MDP: {0}")]
    Invalid(String),
    #[error("cannot parse MDP file: {0}")]
    Parse(String),
    #[error("reading MDP file: {0}")]
    Io(#[from] std::io::Error),
    #[error("{count} deterministic policies exceed the enumeration limit {limit}")]
    TooManyPolicies { count: f64, limit: u64 },
    #[error("discount {0} must lie in [0, 1)")]
    Gamma(f64),
    #[error("tolerance {0} must be positive")]
    Tolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalSpec {
    pub kind: TerminationKind,
    /// Reward paid forever after entry; 0 means no further reward.
    #[serde(default)]
    pub absorbing_reward: f64,
}

/// Finite MDP with sparse transitions and absorbing terminals.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    name: String,
    n_states: usize,
    n_actions: usize,
    /// `transitions[s][a]` lists `(s', p)`; empty for terminal states.
    transitions: Vec<Vec<Vec<(usize, f64)>>>,
    rewards: Vec<Vec<f64>>,
    terminals: BTreeMap<usize, TerminalSpec>,
    start: usize,
    max_steps: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    #[serde(default)]
    name: Option<String>,
    states: usize,
    actions: usize,
    start: usize,
    #[serde(default = "default_max_steps")]
    max_steps: usize,
    #[serde(default)]
    transition: Vec<TransitionRow>,
    #[serde(default)]
    reward: Vec<RewardRow>,
    #[serde(default)]
    terminal: Vec<TerminalRow>,
}

fn default_max_steps() -> usize {
    100
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionRow {
    state: usize,
    action: usize,
    next: usize,
    #[serde(default = "one")]
    prob: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardRow {
    state: usize,
    action: usize,
    reward: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TerminalRow {
    state: usize,
    kind: TerminationKind,
    #[serde(default)]
    absorbing_reward: f64,
}

fn invalid(msg: impl Into<String>) -> MdpError {
    MdpError::Invalid(msg.into())
}

impl TabularMdp {
    /// An MDP with no transitions yet; fill it with the setters, then [`TabularMdp::validate`].
    pub fn empty(name: &str, n_states: usize, n_actions: usize, start: usize, max_steps: usize) -> Self {
        TabularMdp {
            name: name.to_string(),
            n_states,
            n_actions,
            transitions: vec![vec![Vec::new(); n_actions]; n_states],
            rewards: vec![vec![0.0; n_actions]; n_states],
            terminals: BTreeMap::new(),
            start,
            max_steps,
        }
    }

    pub fn add_transition(&mut self, s: usize, a: usize, next: usize, prob: f64) -> &mut Self {
        self.transitions[s][a].push((next, prob));
        self
    }

    pub fn set_reward(&mut self, s: usize, a: usize, r: f64) -> &mut Self {
        self.rewards[s][a] = r;
        self
    }

    pub fn set_terminal(&mut self, s: usize, spec: TerminalSpec) -> &mut Self {
        self.terminals.insert(s, spec);
        self
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(invalid("need at least one state and one action"));
        }
        if self.start >= self.n_states {
            return Err(invalid(format!("start state {} out of range", self.start)));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be positive"));
        }
        for (&s, t) in &self.terminals {
            if s >= self.n_states {
                return Err(invalid(format!("terminal state {s} out of range")));
            }
            if !matches!(t.kind, TerminationKind::Failure | TerminationKind::Success) {
                return Err(invalid(format!("terminal state {s} must be failure or success, got {}", t.kind)));
            }
            if !t.absorbing_reward.is_finite() {
                return Err(invalid(format!("terminal state {s} has a non-finite absorbing reward")));
            }
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = &self.transitions[s][a];
                if self.is_terminal(s) {
                    if !row.is_empty() {
                        return Err(invalid(format!("terminal state {s} has outgoing transitions")));
                    }
                    continue;
                }
                if !self.rewards[s][a].is_finite() {
                    return Err(invalid(format!("reward ({s}, {a}) is not finite")));
                }
                let mut total = 0.0;
                for &(next, p) in row {
                    if next >= self.n_states {
                        return Err(invalid(format!("transition ({s}, {a}) -> {next} out of range")));
                    }
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(invalid(format!("transition ({s}, {a}) -> {next} has probability {p}")));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(invalid(format!("probabilities of ({s}, {a}) sum to {total}")));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, MdpError> {
        let file: MdpFile = toml::from_str(text).map_err(|e| MdpError::Parse(e.to_string()))?;
        let in_range = |s: usize, a: usize, what: &str| {
            if s >= file.states || a >= file.actions {
                Err(invalid(format!("{what} ({s}, {a}) out of range")))
            } else {
                Ok(())
            }
        };
        let mut mdp = TabularMdp::empty(
            file.name.as_deref().unwrap_or("mdp"),
            file.states,
            file.actions,
            file.start,
            file.max_steps,
        );
        for t in &file.terminal {
            if t.state >= file.states {
                return Err(invalid(format!("terminal state {} out of range", t.state)));
            }
            mdp.set_terminal(
                t.state,
                TerminalSpec {
                    kind: t.kind,
                    absorbing_reward: t.absorbing_reward,
                },
            );
        }
        for t in &file.transition {
            in_range(t.state, t.action, "transition")?;
            mdp.add_transition(t.state, t.action, t.next, t.prob);
        }
        for r in &file.reward {
            in_range(r.state, r.action, "reward")?;
            mdp.set_reward(r.state, r.action, r.reward);
        }
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn load(path: &Path) -> Result<Self, MdpError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        let mut file = MdpFile {
            name: Some(self.name.clone()),
            states: self.n_states,
            actions: self.n_actions,
            start: self.start,
            max_steps: self.max_steps,
            transition: vec![],
            reward: vec![],
            terminal: vec![],
        };
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for &(next, prob) in &self.transitions[s][a] {
                    file.transition.push(TransitionRow { state: s, action: a, next, prob });
                }
                if self.rewards[s][a] != 0.0 {
                    file.reward.push(RewardRow {
                        state: s,
                        action: a,
                        reward: self.rewards[s][a],
                    });
                }
            }
        }
        for (&state, t) in &self.terminals {
            file.terminal.push(TerminalRow {
                state,
                kind: t.kind,
                absorbing_reward: t.absorbing_reward,
            });
        }
        toml::to_string(&file).expect("MDP tables serialise")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn transitions(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s][a]
    }

    pub fn terminal(&self, s: usize) -> Option<&TerminalSpec> {
        self.terminals.get(&s)
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminals.contains_key(&s)
    }

    pub fn terminals(&self) -> impl Iterator<Item = (usize, &TerminalSpec)> {
        self.terminals.iter().map(|(&s, t)| (s, t))
    }

    pub fn non_terminal_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|&s| !self.is_terminal(s)).collect()
    }

    /// Kind of the transition into `next`.
    pub fn kind_of(&self, next: usize) -> TerminationKind {
        self.terminal(next).map_or(TerminationKind::NotTerminal, |t| t.kind)
    }

    /// True value of an absorbing terminal, `r_term / (1 - γ)`.
    pub fn terminal_value(&self, s: usize, gamma: f64) -> f64 {
        self.terminal(s).map_or(0.0, |t| t.absorbing_reward / (1.0 - gamma))
    }

    /// Pairs `(s, a)` that can move into a terminal state.
    pub fn terminal_adjacent(&self) -> Vec<(usize, usize)> {
        let mut out = vec![];
        for s in self.non_terminal_states() {
            for a in 0..self.n_actions {
                if self.transitions[s][a].iter().any(|&(n, _)| self.is_terminal(n)) {
                    out.push((s, a));
                }
            }
        }
        out
    }
}

/// Cliff corridor from a [`CliffLayout`]. Action 0 steps, action 1 jumps.
/// Cliff cells absorb the step reward, the goal absorbs the goal reward.
pub fn cliff_mdp(layout: &CliffLayout, max_steps: usize) -> TabularMdp {
    let mut mdp = TabularMdp::empty("cliff-chain", layout.length, 2, 0, max_steps);
    for cell in 0..layout.length {
        match layout.cell_kind(cell) {
            TerminationKind::Failure => {
                mdp.set_terminal(
                    cell,
                    TerminalSpec {
                        kind: TerminationKind::Failure,
                        absorbing_reward: layout.step_reward,
                    },
                );
                continue;
            }
            TerminationKind::Success => {
                mdp.set_terminal(
                    cell,
                    TerminalSpec {
                        kind: TerminationKind::Success,
                        absorbing_reward: layout.goal_reward,
                    },
                );
                continue;
            }
            _ => {}
        }
        for mv in CliffMove::ALL {
            let (next, reward, _) = layout.transition(cell, mv);
            mdp.add_transition(cell, mv.index(), next, 1.0);
            mdp.set_reward(cell, mv.index(), reward);
        }
    }
    mdp
}

/// Corridor of `length` cells, actions left (0) and right (1), constant
/// `reward` per move. The last cell is a terminal of `kind` absorbing `reward`.
/// Moving left from cell 0 stays put.
pub fn corridor_mdp(length: usize, reward: f64, kind: TerminationKind, max_steps: usize) -> TabularMdp {
    assert!(length >= 2, "corridor needs a start and a terminal");
    let name = if reward >= 0.0 { "positive-corridor" } else { "negative-corridor" };
    let mut mdp = TabularMdp::empty(name, length, 2, 0, max_steps);
    let last = length - 1;
    mdp.set_terminal(
        last,
        TerminalSpec {
            kind,
            absorbing_reward: reward,
        },
    );
    for s in 0..last {
        mdp.add_transition(s, 0, s.saturating_sub(1), 1.0);
        mdp.add_transition(s, 1, s + 1, 1.0);
        mdp.set_reward(s, 0, reward);
        mdp.set_reward(s, 1, reward);
    }
    mdp
}
