use crate::error::{Error, Result};
use crate::numerics::{Mlp, Rng, Tape};
use crate::schedule::DiffusionSchedule;

/// Joins per-row blocks `[a_i ‖ b_i ‖ extra_i]` into one row-major matrix.
pub(crate) fn join_rows(parts: &[(&[f64], usize)], rows: usize) -> Vec<f64> {
    let width: usize = parts.iter().map(|p| p.1).sum();
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        for (buf, w) in parts {
            out.extend_from_slice(&buf[r * w..(r + 1) * w]);
        }
    }
    out
}

/// Clamps each row into `[low, high]`; returns the clipped values and a mask
/// that is 1 where the value was inside the bounds (gradient passes) and 0 where it was clamped.
pub(crate) fn clip_with_mask(values: &[f64], low: &[f64], high: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = low.len();
    let mut out = Vec::with_capacity(values.len());
    let mut mask = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        let (lo, hi) = (low[i % d], high[i % d]);
        if v < lo {
            out.push(lo);
            mask.push(0.0);
        } else if v > hi {
            out.push(hi);
            mask.push(0.0);
        } else {
            out.push(v);
            mask.push(1.0);
        }
    }
    (out, mask)
}

/// `f(a_k, k | s) = c_skip(k)·a_k + c_out(k)·F(s, a_k, k/K)`.
///
/// At the smallest noise level `c_skip = 1` and `c_out = 0`, so `f` returns
/// its action argument unchanged whatever the network weights are.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyPolicy {
    pub net: Mlp,
    pub schedule: DiffusionSchedule,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    state_dim: usize,
}

/// Output of a taped batched evaluation, ready for backpropagation.
pub(crate) struct TapedApply {
    pub out: Vec<f64>,
    pub tape: Tape,
    pub c_out: Vec<f64>,
}

impl ConsistencyPolicy {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        schedule: DiffusionSchedule,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let net = Mlp::three_layer(state_dim + action_dim + 1, hidden, action_dim, false, rng)?;
        Self::from_net(net, state_dim, schedule, action_low, action_high)
    }

    pub fn from_net(
        net: Mlp,
        state_dim: usize,
        schedule: DiffusionSchedule,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
    ) -> Result<Self> {
        let action_dim = net.output_dim();
        if net.input_dim() != state_dim + action_dim + 1 {
            return Err(Error::usage(format!(
                "network input {} != state {state_dim} + action {action_dim} + 1",
                net.input_dim()
            )));
        }
        if action_low.len() != action_dim
            || action_high.len() != action_dim
            || action_low.iter().zip(&action_high).any(|(l, h)| !(l < h))
        {
            return Err(Error::usage("action bounds must satisfy low < high per dimension"));
        }
        Ok(Self {
            net,
            schedule,
            action_low,
            action_high,
            state_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn check(&self, states: &[f64], actions: &[f64], ks: &[f64]) -> Result<usize> {
        let rows = ks.len();
        if states.len() != rows * self.state_dim || actions.len() != rows * self.action_dim() {
            return Err(Error::usage(format!(
                "expected {rows} rows of state dim {} and action dim {}",
                self.state_dim,
                self.action_dim()
            )));
        }
        for &k in ks {
            self.schedule.scalings(k)?;
        }
        Ok(rows)
    }

    fn net_input(&self, states: &[f64], actions: &[f64], ks: &[f64]) -> Vec<f64> {
        let times: Vec<f64> = ks.iter().map(|&k| self.schedule.time_feature(k)).collect();
        let d = self.action_dim();
        let sd2 = self.schedule.sigma_data * self.schedule.sigma_data;
        let scaled: Vec<f64> = actions
            .iter()
            .enumerate()
            .map(|(i, a)| a / (ks[i / d] * ks[i / d] + sd2).sqrt())
            .collect();
        join_rows(
            &[(states, self.state_dim), (&scaled, d), (&times, 1)],
            ks.len(),
        )
    }

    fn combine(&self, actions: &[f64], raw: &[f64], ks: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.action_dim();
        let mut out = Vec::with_capacity(actions.len());
        let mut c_outs = Vec::with_capacity(ks.len());
        for (r, &k) in ks.iter().enumerate() {
            let (c_skip, c_out) = self.schedule.scalings_unchecked(k);
            c_outs.push(c_out);
            for j in 0..d {
                out.push(c_skip * actions[r * d + j] + c_out * raw[r * d + j]);
            }
        }
        (out, c_outs)
    }

    /// Single-sample consistency function. No clipping.
    pub fn apply(&self, a_k: &[f64], k: f64, s: &[f64]) -> Result<Vec<f64>> {
        self.apply_batch(s, a_k, &[k])
    }

    /// Batched consistency function over `ks.len()` rows. No clipping.
    pub fn apply_batch(&self, states: &[f64], actions: &[f64], ks: &[f64]) -> Result<Vec<f64>> {
        let rows = self.check(states, actions, ks)?;
        let raw = self.net.predict(&self.net_input(states, actions, ks), rows)?;
        Ok(self.combine(actions, &raw, ks).0)
    }

    pub(crate) fn apply_taped(&self, states: &[f64], actions: &[f64], ks: &[f64]) -> Result<TapedApply> {
        let rows = self.check(states, actions, ks)?;
        let (raw, tape) = self.net.forward_batch(&self.net_input(states, actions, ks), rows)?;
        let (out, c_out) = self.combine(actions, &raw, ks);
        Ok(TapedApply { out, tape, c_out })
    }

    /// Backpropagates dL/df through `f`; only the `F` branch carries parameters.
    pub(crate) fn param_grads(&self, taped: &TapedApply, grad_f: &[f64]) -> Result<Vec<f64>> {
        let d = self.action_dim();
        let grad_raw: Vec<f64> = grad_f
            .iter()
            .enumerate()
            .map(|(i, g)| g * taped.c_out[i / d])
            .collect();
        Ok(self.net.backward(&taped.tape, &grad_raw)?.params)
    }

    /// Maximum-noise starting points `K·z` for a batch of `rows`.
    pub fn initial_noise(&self, rows: usize, rng: &mut Rng) -> Vec<f64> {
        let k = self.schedule.k_max;
        rng.normals(rows * self.action_dim())
            .into_iter()
            .map(|z| k * z)
            .collect()
    }

    pub fn clip(&self, actions: &[f64]) -> Vec<f64> {
        clip_with_mask(actions, &self.action_low, &self.action_high).0
    }

    /// One-step sampling: draw `a_K = K·z`, return `clip(f(a_K, K | s))`.
    /// Exactly one network evaluation.
    pub fn sample_action(&self, s: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.sample_actions(s, 1, rng)
    }

    pub fn sample_actions(&self, states: &[f64], rows: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        let noise = self.initial_noise(rows, rng);
        self.sample_actions_from_noise(states, &noise)
    }

    /// One-step sampling with caller-provided maximum-noise starts (`K·z`).
    pub fn sample_actions_from_noise(&self, states: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        let rows = noise.len() / self.action_dim();
        let ks = vec![self.schedule.k_max; rows];
        Ok(self.clip(&self.apply_batch(states, noise, &ks)?))
    }
}
