//! Exact tabular tools: finite MDPs, dynamic programming, brute-force policy
//! ranking and tabular TD with the configurable terminal handler.
//!
//! Terminal states absorb. Each terminal carries an absorbing reward `r_term`
//! paid forever after entry, so its true value is `r_term / (1 - γ)`. With
//! `r_term = 0` this is the usual "no further reward" episodic objective.

mod mdp;
mod solve;
mod tabular;

pub use mdp::{cliff_mdp, corridor_mdp, MdpError, TabularMdp, TerminalSpec};
pub use solve::{enumerate_policies, evaluate_policy, policy_outcome, value_iteration, RankedPolicy, Solution};
pub use tabular::{replay_updates, tabular_td, TabularEpisode, TabularRun, TabularSchedule, TabularStep};

/// Largest policy count [`enumerate_policies`] will evaluate.
pub const MAX_POLICIES: u64 = 1_000_000;
