//! Squashed-Gaussian actor.
//!
//! The network emits `(mean_1..d, log_std_1..d)`. A pre-squash sample
//! `u ~ N(mean, std)` maps to the action `mid + half·tanh(u)` per dimension,
//! so every emitted action lies inside the box by construction.

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::neural::MlpParams;
use crate::sim::{Action, ActionLimits};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// log(1 − tanh²u), stable for large |u|.
pub(crate) fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// Clamped log-std and whether the clamp was active.
pub(crate) fn clamp_log_std(raw: f64) -> (f64, bool) {
    if raw < LOG_STD_MIN {
        (LOG_STD_MIN, true)
    } else if raw > LOG_STD_MAX {
        (LOG_STD_MAX, true)
    } else {
        (raw, false)
    }
}

/// Log-density contribution of one dimension, in action units.
pub(crate) fn log_density_1d(u: f64, mean: f64, log_std: f64, half: f64) -> f64 {
    let z = (u - mean) / log_std.exp();
    -0.5 * z * z - log_std - 0.5 * (2.0 * PI).ln() - half.ln() - log_one_minus_tanh_sq(u)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    /// Action in environment units.
    pub action: Vec<f64>,
    /// tanh(u), the action rescaled to (-1, 1).
    pub squashed: Vec<f64>,
    /// Pre-squash Gaussian sample u.
    pub raw: Vec<f64>,
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    net: MlpParams,
    low: Vec<f64>,
    high: Vec<f64>,
}

impl PolicyNet {
    pub fn new(net: MlpParams, low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::Shape {
                context: "policy action bounds",
                expected: low.len().max(1),
                actual: high.len(),
            });
        }
        if low.iter().zip(&high).any(|(l, h)| !(l < h)) {
            return Err(Error::config("action_limits", "each lower bound must be below its upper bound"));
        }
        if net.output_dim() != 2 * low.len() {
            return Err(Error::Shape {
                context: "policy output width",
                expected: 2 * low.len(),
                actual: net.output_dim(),
            });
        }
        Ok(Self { net, low, high })
    }

    pub fn for_vehicle(net: MlpParams, limits: &ActionLimits) -> Result<Self> {
        Self::new(net, limits.low().to_vec(), limits.high().to_vec())
    }

    pub fn init<R: Rng>(obs_dim: usize, hidden: &[usize], low: Vec<f64>, high: Vec<f64>, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * low.len());
        Self::new(MlpParams::init(&sizes, rng)?, low, high)
    }

    pub fn net(&self) -> &MlpParams {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut MlpParams {
        &mut self.net
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.low.len()
    }

    pub fn low(&self) -> &[f64] {
        &self.low
    }

    pub fn high(&self) -> &[f64] {
        &self.high
    }

    pub(crate) fn mid_half(&self, i: usize) -> (f64, f64) {
        (0.5 * (self.high[i] + self.low[i]), 0.5 * (self.high[i] - self.low[i]))
    }

    /// Maps a pre-squash value to the action box.
    pub fn squash(&self, i: usize, u: f64) -> f64 {
        let (mid, half) = self.mid_half(i);
        mid + half * u.tanh()
    }

    /// Mean and clamped log-std for one observation.
    pub fn head(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.net.forward(obs)?;
        if let Some(i) = out.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "policy output",
                index: i,
            });
        }
        let d = self.action_dim();
        let mean = out[..d].to_vec();
        let log_std = out[d..].iter().map(|&r| clamp_log_std(r).0).collect();
        Ok((mean, log_std))
    }

    pub fn sample<R: Rng>(&self, obs: &[f64], rng: &mut R) -> Result<PolicySample> {
        let (mean, log_std) = self.head(obs)?;
        let mut s = PolicySample {
            action: Vec::with_capacity(mean.len()),
            squashed: Vec::with_capacity(mean.len()),
            raw: Vec::with_capacity(mean.len()),
            log_prob: 0.0,
        };
        for i in 0..mean.len() {
            let eps: f64 = rng.sample(StandardNormal);
            let u = mean[i] + log_std[i].exp() * eps;
            let (_, half) = self.mid_half(i);
            s.raw.push(u);
            s.squashed.push(u.tanh());
            s.action.push(self.squash(i, u));
            s.log_prob += log_density_1d(u, mean[i], log_std[i], half);
        }
        Ok(s)
    }

    /// Deterministic action: the squashed mean.
    pub fn greedy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let (mean, _) = self.head(obs)?;
        Ok(mean.iter().enumerate().map(|(i, &m)| self.squash(i, m)).collect())
    }

    /// Log-density of an action strictly inside the box.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        if action.len() != self.action_dim() {
            return Err(Error::Shape {
                context: "policy log_prob action",
                expected: self.action_dim(),
                actual: action.len(),
            });
        }
        let (mean, log_std) = self.head(obs)?;
        let mut lp = 0.0;
        for i in 0..action.len() {
            let (mid, half) = self.mid_half(i);
            let u = ((action[i] - mid) / half).atanh();
            lp += log_density_1d(u, mean[i], log_std[i], half);
        }
        Ok(lp)
    }
}

fn to_action(v: &[f64]) -> Action {
    Action::new(v[0], v[1])
}

/// Vehicle-control wrapper around [`PolicyNet::sample`].
pub fn sample_action<R: Rng>(policy: &PolicyNet, obs: &[f64], rng: &mut R) -> Result<(Action, PolicySample)> {
    let s = policy.sample(obs, rng)?;
    Ok((to_action(&s.action), s))
}

pub fn greedy_action(policy: &PolicyNet, obs: &[f64]) -> Result<Action> {
    Ok(to_action(&policy.greedy(obs)?))
}
