//! Training objectives for the consistency policy.
//!
//! All distances are squared Euclidean. Every loss has an `_with` form that
//! takes its noise explicitly, which the gradient checks rely on.

use std::fmt;
use std::str::FromStr;

use super::consistency::clip_with_mask;
use super::ConsistencyPolicy;
use crate::critic::CriticSet;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Floor for the value normaliser in the guidance term.
pub const Q_NORM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grads: Vec<f64>,
}

/// Which behaviour-cloning term the policy objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossMode {
    #[default]
    Reconstruction,
    Consistency,
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reconstruction" => Ok(Self::Reconstruction),
            "consistency" => Ok(Self::Consistency),
            other => Err(Error::config(format!(
                "loss_mode must be reconstruction or consistency, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Reconstruction => "reconstruction",
            Self::Consistency => "consistency",
        })
    }
}

/// Per-row noise for the cloning losses: boundary indices for the online
/// (`high`) and target (`low`) branches plus a shared standard-normal `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub high: Vec<usize>,
    pub low: Vec<usize>,
    pub z: Vec<f64>,
}

impl NoiseDraw {
    /// Draws `m ~ U{1, …, M−1}` per row (one-based), i.e. the online branch at
    /// `k_{m+1}` and the target branch at `k_m`.
    pub fn sample(rows: usize, action_dim: usize, boundaries: usize, rng: &mut Rng) -> Self {
        let high: Vec<usize> = (0..rows).map(|_| 1 + rng.below(boundaries - 1)).collect();
        let low = high.iter().map(|h| h - 1).collect();
        Self {
            high,
            low,
            z: rng.normals(rows * action_dim),
        }
    }

    fn check(&self, rows: usize, action_dim: usize, boundaries: usize) -> Result<()> {
        if self.high.len() != rows || self.low.len() != rows || self.z.len() != rows * action_dim {
            return Err(Error::usage("noise draw does not match batch size"));
        }
        if self.high.iter().chain(&self.low).any(|&i| i >= boundaries) {
            return Err(Error::usage("noise draw index outside the schedule"));
        }
        Ok(())
    }
}

fn noised(policy: &ConsistencyPolicy, batch: &Batch, idx: &[usize], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = policy.action_dim();
    let ks: Vec<f64> = idx.iter().map(|&i| policy.schedule.k(i)).collect();
    let a: Vec<f64> = batch
        .actions
        .iter()
        .zip(z)
        .enumerate()
        .map(|(j, (a, z))| a + ks[j / d] * z)
        .collect();
    (a, ks)
}

/// Squared-distance regression of `f_θ` at `(noisy, ks)` onto `targets`.
fn regress(
    policy: &ConsistencyPolicy,
    states: &[f64],
    noisy: &[f64],
    ks: &[f64],
    targets: &[f64],
) -> Result<LossGrad> {
    let rows = ks.len();
    let taped = policy.apply_taped(states, noisy, ks)?;
    let mut loss = 0.0;
    let grad_f: Vec<f64> = taped
        .out
        .iter()
        .zip(targets)
        .map(|(f, t)| {
            let d = f - t;
            loss += d * d;
            2.0 * d / rows as f64
        })
        .collect();
    Ok(LossGrad {
        loss: loss / rows as f64,
        grads: policy.param_grads(&taped, &grad_f)?,
    })
}

/// `mean ‖f_θ(a + k_{m+1} z, k_{m+1} | s) − a‖²`.
pub fn loss_reconstruction(
    policy: &ConsistencyPolicy,
    _target_policy: &ConsistencyPolicy,
    batch: &Batch,
    rng: &mut Rng,
) -> Result<LossGrad> {
    batch.ensure_non_empty()?;
    let draw = NoiseDraw::sample(batch.size, policy.action_dim(), policy.schedule.len(), rng);
    reconstruction_loss_with(policy, batch, &draw)
}

pub fn reconstruction_loss_with(policy: &ConsistencyPolicy, batch: &Batch, draw: &NoiseDraw) -> Result<LossGrad> {
    batch.ensure_non_empty()?;
    draw.check(batch.size, policy.action_dim(), policy.schedule.len())?;
    let (noisy, ks) = noised(policy, batch, &draw.high, &draw.z);
    regress(policy, &batch.states, &noisy, &ks, &batch.actions)
}

/// `mean ‖f_θ(a + k_{m+1} z, k_{m+1} | s) − f_θ⁻(a + k_m z, k_m | s)‖²`,
/// same `z` in both branches, no gradient through the target branch.
pub fn loss_consistency(
    policy: &ConsistencyPolicy,
    target_policy: &ConsistencyPolicy,
    batch: &Batch,
    rng: &mut Rng,
) -> Result<LossGrad> {
    batch.ensure_non_empty()?;
    let draw = NoiseDraw::sample(batch.size, policy.action_dim(), policy.schedule.len(), rng);
    consistency_loss_with(policy, target_policy, batch, &draw)
}

pub fn consistency_loss_with(
    policy: &ConsistencyPolicy,
    target_policy: &ConsistencyPolicy,
    batch: &Batch,
    draw: &NoiseDraw,
) -> Result<LossGrad> {
    batch.ensure_non_empty()?;
    draw.check(batch.size, policy.action_dim(), policy.schedule.len())?;
    let (noisy_lo, ks_lo) = noised(target_policy, batch, &draw.low, &draw.z);
    let targets = target_policy.apply_batch(&batch.states, &noisy_lo, &ks_lo)?;
    let (noisy_hi, ks_hi) = noised(policy, batch, &draw.high, &draw.z);
    regress(policy, &batch.states, &noisy_hi, &ks_hi, &targets)
}

/// Value guidance `−η·mean(Q_min(s, â)) / max(mean|Q_min(s, a)|, floor)` with
/// `â` the one-step sample. The normaliser is computed on dataset actions and
/// carries no gradient; clipping passes gradient only inside the bounds.
pub fn q_guidance_loss(
    policy: &ConsistencyPolicy,
    critics: &CriticSet,
    batch: &Batch,
    eta: f64,
    rng: &mut Rng,
) -> Result<LossGrad> {
    batch.ensure_non_empty()?;
    let noise = policy.initial_noise(batch.size, rng);
    q_guidance_loss_with(policy, critics, batch, eta, &noise)
}

/// As [`q_guidance_loss`] with fixed maximum-noise starts (`K·z`).
pub fn q_guidance_loss_with(
    policy: &ConsistencyPolicy,
    critics: &CriticSet,
    batch: &Batch,
    eta: f64,
    noise: &[f64],
) -> Result<LossGrad> {
    batch.ensure_non_empty()?;
    let n = batch.size;
    if noise.len() != n * policy.action_dim() {
        return Err(Error::usage("guidance noise does not match batch size"));
    }
    if eta == 0.0 {
        return Ok(LossGrad {
            loss: 0.0,
            grads: vec![0.0; policy.net.param_count()],
        });
    }
    let data_q = critics.q_min(&batch.states, &batch.actions, n)?;
    let denom = (data_q.iter().map(|q| q.abs()).sum::<f64>() / n as f64).max(Q_NORM_FLOOR);
    let ks = vec![policy.schedule.k_max; n];
    let taped = policy.apply_taped(&batch.states, noise, &ks)?;
    let (actions, mask) = clip_with_mask(&taped.out, &policy.action_low, &policy.action_high);
    let scale = -eta / (n as f64 * denom);
    let (q, grad_a) = critics.q_min_action_grad(&batch.states, &actions, n, |_| scale)?;
    let loss = scale * q.iter().sum::<f64>();
    let grad_f: Vec<f64> = grad_a.iter().zip(&mask).map(|(g, m)| g * m).collect();
    Ok(LossGrad {
        loss,
        grads: policy.param_grads(&taped, &grad_f)?,
    })
}

/// Full policy objective and its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLoss {
    /// `alpha · bc + guidance`
    pub total: f64,
    /// Unweighted cloning loss (reconstruction or consistency).
    pub bc: f64,
    pub guidance: f64,
    pub grads: Vec<f64>,
}

/// Explicit noise for [`policy_loss_total_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNoise {
    pub bc: NoiseDraw,
    pub guidance: Vec<f64>,
}

impl PolicyNoise {
    pub fn sample(policy: &ConsistencyPolicy, rows: usize, rng: &mut Rng) -> Self {
        let bc = NoiseDraw::sample(rows, policy.action_dim(), policy.schedule.len(), rng);
        let guidance = policy.initial_noise(rows, rng);
        Self { bc, guidance }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn policy_loss_total(
    policy: &ConsistencyPolicy,
    target_policy: &ConsistencyPolicy,
    critics: &CriticSet,
    batch: &Batch,
    alpha: f64,
    eta: f64,
    mode: LossMode,
    rng: &mut Rng,
) -> Result<PolicyLoss> {
    batch.ensure_non_empty()?;
    let noise = PolicyNoise::sample(policy, batch.size, rng);
    policy_loss_total_with(policy, target_policy, critics, batch, alpha, eta, mode, &noise)
}

#[allow(clippy::too_many_arguments)]
pub fn policy_loss_total_with(
    policy: &ConsistencyPolicy,
    target_policy: &ConsistencyPolicy,
    critics: &CriticSet,
    batch: &Batch,
    alpha: f64,
    eta: f64,
    mode: LossMode,
    noise: &PolicyNoise,
) -> Result<PolicyLoss> {
    let bc = match mode {
        LossMode::Reconstruction => reconstruction_loss_with(policy, batch, &noise.bc)?,
        LossMode::Consistency => consistency_loss_with(policy, target_policy, batch, &noise.bc)?,
    };
    let guidance = q_guidance_loss_with(policy, critics, batch, eta, &noise.guidance)?;
    let grads = bc
        .grads
        .iter()
        .zip(&guidance.grads)
        .map(|(b, g)| alpha * b + g)
        .collect();
    Ok(PolicyLoss {
        total: alpha * bc.loss + guidance.loss,
        bc: bc.loss,
        guidance: guidance.loss,
        grads,
    })
}
