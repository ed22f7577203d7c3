//! Terminal-state handling for temporal-difference learning.
//!
//! The crate compares three ways of building the TD target when an episode
//! ends: assume zero value after termination, ignore termination, or
//! intentionally underestimate the value after termination by an amount that
//! shrinks as the terminal state becomes stationary.
//!
//! * [`td`]: the target formulas and their closed-form helpers.
//! * [`envs`]: small control tasks with failure / time-limit semantics.
//! * [`nn`]: an MLP with analytic gradients and Adam.
//! * [`agents`]: policy-gradient and reparameterised actor-critic learners.
//! * [`oracle`]: exact tabular MDP tools and tabular TD.
//! * [`harness`]: seed sweeps, CSV logs, summaries and comparison tables.

pub mod agents;
pub mod envs;
pub mod harness;
pub mod nn;
pub mod oracle;
pub mod td;

pub use agents::Algo;
pub use harness::{run_experiment, ExperimentConfig, RunSummary};
pub use td::{td_target, td_target_split, Handler, TdConfig, TerminationKind, Transition, ValueTriple};
