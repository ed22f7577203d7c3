use ndarray::{s, Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::nn::{Activation, ForwardCache, GradientBuffer, Init, Mlp, NnError};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// `ln(1 - tanh(u)²)`, stable for large `|u|`.
pub(crate) fn ln_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Diagonal Gaussian over pre-squash actions, squashed by `tanh` onto the bounds.
///
/// The actor network outputs `[mean (d), log_std (d)]`; the log-std head is
/// hard-clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    center: Vec<f64>,
    half: Vec<f64>,
}

/// One draw from the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    /// Pre-squash value `u`.
    pub raw: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

/// Actor outputs for a batch, split into heads.
#[derive(Debug, Clone)]
pub struct Heads {
    pub cache: ForwardCache,
    pub mean: Array2<f64>,
    pub log_std: Array2<f64>,
    /// 1 where the log-std head is inside the clamp range, 0 where it is clamped.
    pub log_std_live: Array2<f64>,
}

impl GaussianPolicy {
    pub fn new(
        state_dim: usize,
        hidden: &[usize],
        bounds: &[(f64, f64)],
        rng: &mut impl Rng,
    ) -> Self {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * bounds.len());
        let net = Mlp::new(&sizes, Activation::Tanh, Init::ACTOR, rng);
        Self::from_net(net, bounds)
    }

    pub fn from_net(net: Mlp, bounds: &[(f64, f64)]) -> Self {
        assert_eq!(net.output_dim(), 2 * bounds.len(), "actor must output mean and log-std");
        GaussianPolicy {
            net,
            center: bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect(),
            half: bounds.iter().map(|&(lo, hi)| 0.5 * (hi - lo)).collect(),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.center.len()
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn half_range(&self) -> &[f64] {
        &self.half
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.center.iter().zip(&self.half).map(|(c, h)| (c - h, c + h)).collect()
    }

    pub fn heads(&self, states: ArrayView2<f64>) -> Result<Heads, NnError> {
        let cache = self.net.forward_cached(states)?;
        let d = self.action_dim();
        let mean = cache.output.slice(s![.., ..d]).to_owned();
        let raw_ls = cache.output.slice(s![.., d..]);
        let log_std = raw_ls.mapv(|x| x.clamp(LOG_STD_MIN, LOG_STD_MAX));
        let log_std_live = raw_ls.mapv(|x| {
            if x > LOG_STD_MIN && x < LOG_STD_MAX {
                1.0
            } else {
                0.0
            }
        });
        Ok(Heads {
            cache,
            mean,
            log_std,
            log_std_live,
        })
    }

    pub fn squash(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.center.iter().zip(&self.half))
            .map(|(u, (c, h))| c + h * u.tanh())
            .collect()
    }

    /// Inverse of [`GaussianPolicy::squash`], pulling boundary actions slightly inside.
    pub fn unsquash(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.center.iter().zip(&self.half))
            .map(|(a, (c, h))| ((a - c) / h).clamp(-1.0 + 1e-9, 1.0 - 1e-9).atanh())
            .collect()
    }

    /// Log-density of the squashed action `squash(raw)` given the Gaussian
    /// parameters, including the change-of-variables term.
    pub fn log_prob_from_heads(&self, mean: &[f64], log_std: &[f64], raw: &[f64]) -> f64 {
        let mut lp = 0.0;
        for j in 0..raw.len() {
            let z = (raw[j] - mean[j]) / log_std[j].exp();
            lp += -0.5 * z * z - log_std[j] - HALF_LN_TWO_PI;
            lp -= ln_one_minus_tanh_sq(raw[j]) + self.half[j].ln();
        }
        lp
    }

    /// Row-wise log-density of pre-squash actions `raws`.
    pub fn log_prob_batch(&self, heads: &Heads, raws: ArrayView2<f64>) -> Array1<f64> {
        Array1::from_shape_fn(raws.nrows(), |i| {
            self.log_prob_from_heads(
                heads.mean.row(i).as_slice().expect("contiguous"),
                heads.log_std.row(i).as_slice().expect("contiguous"),
                raws.row(i).to_vec().as_slice(),
            )
        })
    }

    pub fn log_prob(&self, state: &[f64], raw: &[f64]) -> Result<f64, NnError> {
        let x = ArrayView2::from_shape((1, state.len()), state).expect("row view");
        let h = self.heads(x)?;
        Ok(self.log_prob_from_heads(
            h.mean.row(0).as_slice().expect("contiguous"),
            h.log_std.row(0).as_slice().expect("contiguous"),
            raw,
        ))
    }

    /// Density of a bounded action (not its pre-squash value).
    pub fn log_prob_of_action(&self, state: &[f64], action: &[f64]) -> Result<f64, NnError> {
        self.log_prob(state, &self.unsquash(action))
    }

    pub fn sample(&self, state: &[f64], rng: &mut impl Rng) -> Result<PolicySample, NnError> {
        let x = ArrayView2::from_shape((1, state.len()), state).expect("row view");
        let h = self.heads(x)?;
        let mean = h.mean.row(0);
        let log_std = h.log_std.row(0);
        let raw: Vec<f64> = (0..self.action_dim())
            .map(|j| mean[j] + log_std[j].exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let log_prob = self.log_prob_from_heads(
            mean.as_slice().expect("contiguous"),
            log_std.as_slice().expect("contiguous"),
            &raw,
        );
        Ok(PolicySample {
            action: self.squash(&raw),
            raw,
            log_prob,
        })
    }

    /// Deterministic evaluation action `squash(mean)`.
    pub fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>, NnError> {
        let out = self.net.forward(state)?;
        Ok(self.squash(&out[..self.action_dim()]))
    }

    /// Monte Carlo estimate of the differential entropy at `state`.
    pub fn entropy_estimate(&self, state: &[f64], samples: usize, rng: &mut impl Rng) -> Result<f64, NnError> {
        let mut acc = 0.0;
        for _ in 0..samples {
            acc -= self.sample(state, rng)?.log_prob;
        }
        Ok(acc / samples as f64)
    }

    /// Backpropagates gradients given per-row derivatives with respect to the
    /// mean and (clamped) log-std heads.
    pub fn backward_heads(
        &self,
        heads: &Heads,
        d_mean: &Array2<f64>,
        d_log_std: &Array2<f64>,
    ) -> Result<GradientBuffer, NnError> {
        let d = self.action_dim();
        let mut out_grad = Array2::zeros(heads.cache.output.dim());
        out_grad.slice_mut(s![.., ..d]).assign(d_mean);
        out_grad
            .slice_mut(s![.., d..])
            .assign(&(d_log_std * &heads.log_std_live));
        self.net.backward_cached(&heads.cache, out_grad.view())
    }
}
