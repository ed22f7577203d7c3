use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::mdp::{MdpError, TabularMdp};
use super::MAX_POLICIES;
use crate::td::TerminationKind;

/// Values, action values and a greedy policy. Terminal rows hold the
/// absorbing value for every action; their policy entry is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub policy: Vec<usize>,
}

fn check_gamma(gamma: f64) -> Result<(), MdpError> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(MdpError::Gamma(gamma))
    }
}

fn q_row(mdp: &TabularMdp, values: &[f64], gamma: f64, s: usize) -> Vec<f64> {
    (0..mdp.n_actions())
        .map(|a| {
            mdp.reward(s, a) + gamma * mdp.transitions(s, a).iter().map(|&(n, p)| p * values[n]).sum::<f64>()
        })
        .collect()
}

/// First index of the maximum; later entries must win by more than `1e-12`.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] + 1e-12 {
            best = i;
        }
    }
    best
}

/// Bellman optimality iteration, stopped once the sup-norm error bound
/// `γ/(1-γ)·‖V_k - V_{k-1}‖` drops below `tol`.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64) -> Result<Solution, MdpError> {
    check_gamma(gamma)?;
    if !(tol > 0.0) {
        return Err(MdpError::Tolerance(tol));
    }
    let n = mdp.n_states();
    let mut values: Vec<f64> = (0..n).map(|s| mdp.terminal_value(s, gamma)).collect();
    loop {
        let mut delta: f64 = 0.0;
        let mut next = values.clone();
        for s in mdp.non_terminal_states() {
            let best = q_row(mdp, &values, gamma, s).into_iter().fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - values[s]).abs());
            next[s] = best;
        }
        values = next;
        if gamma == 0.0 || delta * gamma / (1.0 - gamma) < tol {
            break;
        }
    }
    let mut q = vec![vec![0.0; mdp.n_actions()]; n];
    let mut policy = vec![0; n];
    for s in 0..n {
        if mdp.is_terminal(s) {
            q[s] = vec![values[s]; mdp.n_actions()];
        } else {
            q[s] = q_row(mdp, &values, gamma, s);
            policy[s] = argmax(&q[s]);
        }
    }
    Ok(Solution { values, q, policy })
}

/// Exact values of a deterministic stationary policy by one linear solve over
/// the non-terminal states.
pub fn evaluate_policy(mdp: &TabularMdp, gamma: f64, policy: &[usize]) -> Result<Vec<f64>, MdpError> {
    check_gamma(gamma)?;
    if policy.len() != mdp.n_states() || policy.iter().any(|&a| a >= mdp.n_actions()) {
        return Err(MdpError::Invalid(format!("policy {policy:?} does not fit the MDP")));
    }
    let live = mdp.non_terminal_states();
    let mut index = vec![usize::MAX; mdp.n_states()];
    for (k, &s) in live.iter().enumerate() {
        index[s] = k;
    }
    let m = live.len();
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (k, &s) in live.iter().enumerate() {
        let act = policy[s];
        b[k] = mdp.reward(s, act);
        for &(next, p) in mdp.transitions(s, act) {
            if mdp.is_terminal(next) {
                b[k] += gamma * p * mdp.terminal_value(next, gamma);
            } else {
                a[(k, index[next])] -= gamma * p;
            }
        }
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| MdpError::Invalid("policy evaluation system is singular".into()))?;
    Ok((0..mdp.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                mdp.terminal_value(s, gamma)
            } else {
                x[index[s]]
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPolicy {
    /// Action per state; 0 at terminal states.
    pub policy: Vec<usize>,
    pub values: Vec<f64>,
    pub start_value: f64,
}

/// Every deterministic stationary policy, best first by true start value.
///
/// Only non-terminal states carry a choice, so the guard counts
/// `|A|^(non-terminal states)` against [`MAX_POLICIES`].
pub fn enumerate_policies(mdp: &TabularMdp, gamma: f64) -> Result<Vec<RankedPolicy>, MdpError> {
    check_gamma(gamma)?;
    let live = mdp.non_terminal_states();
    let count = (mdp.n_actions() as f64).powi(live.len() as i32);
    if count > MAX_POLICIES as f64 {
        return Err(MdpError::TooManyPolicies {
            count,
            limit: MAX_POLICIES,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; live.len()];
    loop {
        let mut policy = vec![0; mdp.n_states()];
        for (k, &s) in live.iter().enumerate() {
            policy[s] = digits[k];
        }
        let values = evaluate_policy(mdp, gamma, &policy)?;
        out.push(RankedPolicy {
            start_value: values[mdp.start()],
            policy,
            values,
        });
        // odometer increment, last state fastest
        let mut k = live.len();
        loop {
            if k == 0 {
                out.sort_by(|x, y| {
                    y.start_value
                        .total_cmp(&x.start_value)
                        .then_with(|| x.policy.cmp(&y.policy))
                });
                return Ok(out);
            }
            k -= 1;
            digits[k] += 1;
            if digits[k] < mdp.n_actions() {
                break;
            }
            digits[k] = 0;
        }
    }
}

/// Runs `policy` from the start state for at most `max_steps` moves.
/// Returns how the episode ended, its length and its (undiscounted) return.
pub fn policy_outcome(
    mdp: &TabularMdp,
    policy: &[usize],
    rng: &mut impl Rng,
) -> (TerminationKind, usize, f64) {
    let mut s = mdp.start();
    let mut ret = 0.0;
    for step in 1..=mdp.max_steps() {
        let a = policy[s];
        ret += mdp.reward(s, a);
        s = sample_next(mdp, s, a, rng);
        if let Some(t) = mdp.terminal(s) {
            return (t.kind, step, ret);
        }
    }
    (TerminationKind::TimeLimit, mdp.max_steps(), ret)
}

pub(crate) fn sample_next(mdp: &TabularMdp, s: usize, a: usize, rng: &mut impl Rng) -> usize {
    let row = mdp.transitions(s, a);
    if row.len() == 1 {
        return row[0].0;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(n, p) in row {
        acc += p;
        if u < acc {
            return n;
        }
    }
    row.last().expect("validated rows are non-empty").0
}
