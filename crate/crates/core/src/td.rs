//! TD targets and the terminal-transition corrections they depend on.
//!
//! Everything here is a pure function of its arguments. The three handlers
//! differ only in what they do when a transition ends the episode:
//!
//! * [`Handler::Zero`] drops the bootstrap term (`y = r`),
//! * [`Handler::Ignore`] bootstraps as usual (`y = r + γ V'`),
//! * [`Handler::Underest`] bootstraps and subtracts the non-negative
//!   correction `Ũ` from [`underestimation_u_tilde`].
//!
//! The absorption ratio `ζ` only appears in the verification helpers
//! ([`kappa`], [`correction_u`], [`consistency_check_u`]); the handler itself
//! uses the `ζ`-free bound `λ κ_max(γ)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TdError {
    #[error("discount factor {0} is outside [0, 1)")]
    Gamma(f64),
    #[error("discount factor {0} is outside (0, 1)")]
    GammaOpen(f64),
    #[error("underestimation weight {0} is outside [0, 1]")]
    Lambda(f64),
    #[error("absorption ratio {0} is outside [0, 1]")]
    Zeta(f64),
    #[error("non-finite value in TD inputs")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, TdError>;

/// How a transition ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationKind {
    NotTerminal,
    Failure,
    /// Goal reached. Handled exactly like `Failure` by every handler.
    Success,
    TimeLimit,
}

impl TerminationKind {
    pub const ALL: [TerminationKind; 4] = [
        TerminationKind::NotTerminal,
        TerminationKind::Failure,
        TerminationKind::Success,
        TerminationKind::TimeLimit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TerminationKind::NotTerminal => "not_terminal",
            TerminationKind::Failure => "failure",
            TerminationKind::Success => "success",
            TerminationKind::TimeLimit => "time_limit",
        }
    }

    /// True when the episode ended here, for any reason.
    pub fn ends_episode(self) -> bool {
        self != TerminationKind::NotTerminal
    }

    /// True when the terminal handler should run for this transition.
    pub fn is_exception(self, treat_time_limit_as_terminal: bool) -> bool {
        match self {
            TerminationKind::NotTerminal => false,
            TerminationKind::Failure | TerminationKind::Success => true,
            TerminationKind::TimeLimit => treat_time_limit_as_terminal,
        }
    }
}

impl fmt::Display for TerminationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerminationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        TerminationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown termination kind `{s}`"))
    }
}

/// Terminal-transition handler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handler {
    Zero,
    Ignore,
    Underest,
}

impl Handler {
    pub const ALL: [Handler; 3] = [Handler::Zero, Handler::Ignore, Handler::Underest];

    pub fn as_str(self) -> &'static str {
        match self {
            Handler::Zero => "zero",
            Handler::Ignore => "ignore",
            Handler::Underest => "underest",
        }
    }
}

impl fmt::Display for Handler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Handler {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Handler::ALL
            .into_iter()
            .find(|h| h.as_str() == s)
            .ok_or_else(|| format!("unknown handler `{s}` (expected zero, ignore or underest)"))
    }
}

pub const DEFAULT_GAMMA: f64 = 0.99;
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub handler: Handler,
    pub treat_time_limit_as_terminal: bool,
}

impl TdConfig {
    pub fn new(handler: Handler) -> Self {
        TdConfig {
            gamma: DEFAULT_GAMMA,
            lambda: DEFAULT_LAMBDA,
            handler,
            treat_time_limit_as_terminal: true,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_time_limit_as_terminal(mut self, yes: bool) -> Self {
        self.treat_time_limit_as_terminal = yes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        check_lambda(self.lambda)
    }
}

impl Default for TdConfig {
    fn default() -> Self {
        TdConfig::new(Handler::Zero)
    }
}

/// One environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub termination: TerminationKind,
}

impl Transition {
    /// Target for this transition given critic values at `state` and `next_state`.
    pub fn td_target(&self, v: f64, v_next: f64, cfg: &TdConfig) -> Result<f64> {
        td_target(
            self.termination,
            &ValueTriple {
                v,
                v_next,
                reward: self.reward,
            },
            cfg,
        )
    }
}

/// Value estimates entering the terminal correction: `V(s)`, `V(s')` and the reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueTriple {
    pub v: f64,
    pub v_next: f64,
    pub reward: f64,
}

impl ValueTriple {
    /// `V_r = r / (1 - γ)`, the value of staying in an absorbing state paying `r`.
    pub fn reward_value(&self, gamma: f64) -> f64 {
        self.reward / (1.0 - gamma)
    }

    /// `(ΔV', ΔV_r) = (V' - V, V_r - V)`.
    pub fn deltas(&self, gamma: f64) -> (f64, f64) {
        (self.v_next - self.v, self.reward_value(gamma) - self.v)
    }

    fn check_finite(&self) -> Result<()> {
        if self.v.is_finite() && self.v_next.is_finite() && self.reward.is_finite() {
            Ok(())
        } else {
            Err(TdError::NonFinite)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionInputs {
    pub zeta: f64,
    pub gamma: f64,
    pub reward: f64,
    pub v_next: f64,
}

impl CorrectionInputs {
    pub fn validate(&self) -> Result<()> {
        check_zeta(self.zeta)?;
        check_gamma(self.gamma)?;
        if !(self.reward.is_finite() && self.v_next.is_finite()) {
            return Err(TdError::NonFinite);
        }
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(TdError::Gamma(gamma))
    }
}

fn check_gamma_open(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(TdError::GammaOpen(gamma))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(TdError::Lambda(lambda))
    }
}

fn check_zeta(zeta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&zeta) {
        Ok(())
    } else {
        Err(TdError::Zeta(zeta))
    }
}

/// Value of an absorbing state that pays `r_term` forever.
pub fn v_term_from_reward(r_term: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(r_term / (1.0 - gamma))
}

/// Value of the absorbing state recovered from `V'` when a fraction `ζ` of the
/// terminal transition has not been absorbed yet.
pub fn v_term_from_next(v_next: f64, reward: f64, zeta: f64, gamma: f64) -> Result<f64> {
    check_zeta(zeta)?;
    check_gamma(gamma)?;
    Ok((v_next - zeta * reward) / (1.0 - zeta * (1.0 - gamma)))
}

/// `κ(ζ, γ) = γ ζ (1 - ζ) / (1 - ζ (1 - γ))`. Zero at both ends of `ζ ∈ [0, 1]`.
pub fn kappa(zeta: f64, gamma: f64) -> Result<f64> {
    check_zeta(zeta)?;
    check_gamma(gamma)?;
    Ok(gamma * zeta * (1.0 - zeta) / (1.0 - zeta * (1.0 - gamma)))
}

/// Maximiser of `κ(·, γ)`: `(1 - √γ) / (1 - γ)`, equivalently `1 / (1 + √γ)`.
///
/// `γ = 0` is rejected: `κ` vanishes identically and has no unique maximiser.
pub fn zeta_max(gamma: f64) -> Result<f64> {
    check_gamma_open(gamma)?;
    Ok((1.0 - gamma.sqrt()) / (1.0 - gamma))
}

/// `κ_max(γ) = γ ((1 - √γ) / (1 - γ))²`. Increases towards 1/4 as `γ → 1`.
pub fn kappa_max(gamma: f64) -> Result<f64> {
    let z = zeta_max(gamma)?;
    Ok(gamma * z * z)
}

/// Exact absorbing-state correction `U = κ(ζ, γ) (r - (1 - γ) V')`.
pub fn correction_u(inputs: &CorrectionInputs) -> Result<f64> {
    inputs.validate()?;
    let k = kappa(inputs.zeta, inputs.gamma)?;
    Ok(k * (inputs.reward - (1.0 - inputs.gamma) * inputs.v_next))
}

/// Checks `r + γV' - U` against the absorbing-state recursion
/// `r + γ (ζ V' + (1 - ζ) V_term)` evaluated directly, to 1e-10 (relative
/// once the magnitudes exceed one).
pub fn consistency_check_u(inputs: &CorrectionInputs) -> Result<bool> {
    inputs.validate()?;
    let CorrectionInputs {
        zeta,
        gamma,
        reward,
        v_next,
    } = *inputs;
    let via_u = reward + gamma * v_next - correction_u(inputs)?;
    let v_term = v_term_from_next(v_next, reward, zeta, gamma)?;
    let direct = reward + gamma * (zeta * v_next + (1.0 - zeta) * v_term);
    let scale = 1.0_f64.max(via_u.abs()).max(direct.abs());
    Ok((via_u - direct).abs() <= 1e-10 * scale)
}

/// Both sides of `r - (1 - γ) V' = γΔV' - ΔV' - γΔV_r + ΔV_r`.
///
/// The right-hand side depends on `v` only through the deltas, and `v` cancels.
pub fn bracket_identity(reward: f64, v: f64, v_next: f64, gamma: f64) -> Result<(f64, f64)> {
    check_gamma(gamma)?;
    let triple = ValueTriple { v, v_next, reward };
    triple.check_finite()?;
    let lhs = reward - (1.0 - gamma) * v_next;
    let (dv_next, dv_r) = triple.deltas(gamma);
    let rhs = gamma * dv_next - dv_next - gamma * dv_r + dv_r;
    Ok((lhs, rhs))
}

/// `Ũ = λ κ_max(γ) {γ max(ΔV',0) - min(ΔV',0) - γ min(ΔV_r,0) + max(ΔV_r,0)}`.
///
/// Non-negative by construction and zero when `V = V' = V_r`.
pub fn underestimation_u_tilde(triple: &ValueTriple, gamma: f64, lambda: f64) -> Result<f64> {
    check_gamma(gamma)?;
    check_lambda(lambda)?;
    triple.check_finite()?;
    if gamma == 0.0 {
        // κ_max → 0 as γ → 0.
        return Ok(0.0);
    }
    let (dv_next, dv_r) = triple.deltas(gamma);
    let shaped = gamma * dv_next.max(0.0) - dv_next.min(0.0) - gamma * dv_r.min(0.0)
        + dv_r.max(0.0);
    Ok(lambda * kappa_max(gamma)? * shaped)
}

/// TD target `y` for one transition under the configured handler.
pub fn td_target(termination: TerminationKind, triple: &ValueTriple, cfg: &TdConfig) -> Result<f64> {
    td_target_split(termination, triple, triple.v_next, cfg)
}

/// As [`td_target`], but bootstraps from `v_next_bootstrap` while the
/// underestimation term reads `triple`. Lets a learner bootstrap from target
/// networks while measuring the shaping deltas with online estimates.
pub fn td_target_split(
    termination: TerminationKind,
    triple: &ValueTriple,
    v_next_bootstrap: f64,
    cfg: &TdConfig,
) -> Result<f64> {
    cfg.validate()?;
    triple.check_finite()?;
    if !v_next_bootstrap.is_finite() {
        return Err(TdError::NonFinite);
    }
    let bootstrap = triple.reward + cfg.gamma * v_next_bootstrap;
    if !termination.is_exception(cfg.treat_time_limit_as_terminal) {
        return Ok(bootstrap);
    }
    Ok(match cfg.handler {
        Handler::Zero => triple.reward,
        Handler::Ignore => bootstrap,
        Handler::Underest => bootstrap - underestimation_u_tilde(triple, cfg.gamma, cfg.lambda)?,
    })
}
