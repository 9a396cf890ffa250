//! Multi-step baseline: a denoiser `D(a, k | s)` sampled with Euler steps on
//! the probability-flow ODE. Used only to measure what one-step sampling saves.

use super::losses::{reconstruction_loss_with, LossGrad, NoiseDraw};
use super::ConsistencyPolicy;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::numerics::{Mlp, Rng};
use crate::schedule::{euler_step, DiffusionSchedule};

/// Denoiser with the same skip/out parameterisation and network shape as the
/// consistency policy, so that the two differ only in how they are sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserPolicy {
    pub inner: ConsistencyPolicy,
    n_steps: usize,
}

impl DenoiserPolicy {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        schedule: DiffusionSchedule,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        n_steps: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let inner = ConsistencyPolicy::new(state_dim, action_dim, hidden, schedule, action_low, action_high, rng)?;
        Self::from_policy(inner, n_steps)
    }

    pub fn from_policy(inner: ConsistencyPolicy, n_steps: usize) -> Result<Self> {
        check_steps(n_steps, inner.schedule.len())?;
        Ok(Self { inner, n_steps })
    }

    pub fn net(&self) -> &Mlp {
        &self.inner.net
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn set_n_steps(&mut self, n_steps: usize) -> Result<()> {
        check_steps(n_steps, self.inner.schedule.len())?;
        self.n_steps = n_steps;
        Ok(())
    }

    /// `D(a, k | s)` for a batch sharing one noise level.
    pub fn denoise(&self, states: &[f64], actions: &[f64], k: f64) -> Result<Vec<f64>> {
        let rows = actions.len() / self.inner.action_dim();
        self.inner.apply_batch(states, actions, &vec![k; rows])
    }
}

/// Rejects chains that are empty or longer than the schedule allows.
pub fn check_steps(n_steps: usize, boundaries: usize) -> Result<()> {
    if n_steps == 0 || n_steps >= boundaries {
        return Err(Error::config(format!(
            "n_steps must be in 1..={}, got {n_steps}",
            boundaries - 1
        )));
    }
    Ok(())
}

/// Boundary indices visited by an `n_steps` chain, from `M−1` down to 0.
pub fn euler_indices(boundaries: usize, n_steps: usize) -> Vec<usize> {
    let top = (boundaries - 1) as f64;
    (0..=n_steps)
        .map(|j| (top * (n_steps - j) as f64 / n_steps as f64).round() as usize)
        .collect()
}

/// Runs the Euler chain from `start` (noise at `K`) using score
/// `(D(a, k) − a) / k²`. Calls `denoise` once per step.
pub fn euler_chain<D>(schedule: &DiffusionSchedule, n_steps: usize, start: Vec<f64>, mut denoise: D) -> Result<Vec<f64>>
where
    D: FnMut(&[f64], f64) -> Result<Vec<f64>>,
{
    check_steps(n_steps, schedule.len())?;
    let idx = euler_indices(schedule.len(), n_steps);
    let mut a = start;
    for w in idx.windows(2) {
        let (k_from, k_to) = (schedule.k(w[0]), schedule.k(w[1]));
        let d = denoise(&a, k_from)?;
        let k2 = k_from * k_from;
        a = euler_step(&a, k_from, k_to, |a, _| {
            a.iter().zip(&d).map(|(a, d)| (d - a) / k2).collect()
        })?;
    }
    Ok(a)
}

/// Batched Euler sampling, clipped to the action bounds. Exactly `n_steps`
/// network passes per row.
pub fn euler_sample_batch(dp: &DenoiserPolicy, states: &[f64], rows: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let start = dp.inner.initial_noise(rows, rng);
    let out = euler_chain(&dp.inner.schedule, dp.n_steps, start, |a, k| dp.denoise(states, a, k))?;
    Ok(dp.inner.clip(&out))
}

pub fn euler_sample(dp: &DenoiserPolicy, s: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    euler_sample_batch(dp, s, 1, rng)
}

/// `mean ‖D(a + k z, k | s) − a‖²` with `k` uniform over boundaries `2..=M`.
pub fn loss_denoising(dp: &DenoiserPolicy, batch: &Batch, rng: &mut Rng) -> Result<LossGrad> {
    batch.ensure_non_empty()?;
    let p = &dp.inner;
    let draw = NoiseDraw::sample(batch.size, p.action_dim(), p.schedule.len(), rng);
    reconstruction_loss_with(p, batch, &draw)
}
