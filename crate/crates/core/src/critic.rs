//! Value estimation: clipped double-Q critics with Polyak targets, and the
//! expectile (implicit-Q) variant with a separate state-value network.

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::numerics::{ema_update, Mlp, Rng};
use crate::policy::{join_rows, ConsistencyPolicy, LossGrad};

#[derive(Debug, Clone, PartialEq)]
pub struct CriticSet {
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    /// State-value network, present only for the expectile variant.
    pub v: Option<Mlp>,
    pub gamma: f64,
    pub tau: f64,
    state_dim: usize,
    action_dim: usize,
}

/// Losses and gradients for both Q networks.
#[derive(Debug, Clone, PartialEq)]
pub struct QLoss {
    /// Sum of the two mean squared errors.
    pub loss: f64,
    pub q1_grads: Vec<f64>,
    pub q2_grads: Vec<f64>,
    /// Bellman targets used for this batch.
    pub targets: Vec<f64>,
}

/// Asymmetric squared loss `|τ − 1(u < 0)|·u²`.
pub fn expectile_loss(u: f64, tau: f64) -> f64 {
    expectile_weight(u, tau) * u * u
}

fn expectile_weight(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

impl CriticSet {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: usize,
        with_value: bool,
        gamma: f64,
        tau: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::config(format!("gamma must be in (0, 1], got {gamma}")));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::config(format!("tau must be in (0, 1), got {tau}")));
        }
        let q1 = Mlp::three_layer(state_dim + action_dim, hidden, 1, true, rng)?;
        let q2 = Mlp::three_layer(state_dim + action_dim, hidden, 1, true, rng)?;
        let v = if with_value {
            Some(Mlp::three_layer(state_dim, hidden, 1, true, rng)?)
        } else {
            None
        };
        Ok(Self {
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            v,
            gamma,
            tau,
            state_dim,
            action_dim,
        })
    }

    /// Assembles a set from existing networks; targets start as copies of the online nets.
    pub fn from_nets(q1: Mlp, q2: Mlp, v: Option<Mlp>, state_dim: usize, gamma: f64, tau: f64) -> Result<Self> {
        if !q1.same_architecture(&q2) || q1.output_dim() != 1 || q1.input_dim() <= state_dim {
            return Err(Error::usage("Q networks must share an architecture with (state, action) input and scalar output"));
        }
        if let Some(v) = &v {
            if v.input_dim() != state_dim || v.output_dim() != 1 {
                return Err(Error::usage("V network must map a state to a scalar"));
            }
        }
        Ok(Self {
            action_dim: q1.input_dim() - state_dim,
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            v,
            gamma,
            tau,
            state_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn sa(&self, states: &[f64], actions: &[f64], rows: usize) -> Result<Vec<f64>> {
        if states.len() != rows * self.state_dim || actions.len() != rows * self.action_dim {
            return Err(Error::usage("state/action batch does not match critic dims"));
        }
        Ok(join_rows(&[(states, self.state_dim), (actions, self.action_dim)], rows))
    }

    /// `min(Q1, Q2)` on the online networks.
    pub fn q_min(&self, states: &[f64], actions: &[f64], rows: usize) -> Result<Vec<f64>> {
        let x = self.sa(states, actions, rows)?;
        let a = self.q1.predict(&x, rows)?;
        let b = self.q2.predict(&x, rows)?;
        Ok(a.iter().zip(&b).map(|(a, b)| a.min(*b)).collect())
    }

    /// `min(Q1⁻, Q2⁻)` on the target networks.
    pub fn q_min_target(&self, states: &[f64], actions: &[f64], rows: usize) -> Result<Vec<f64>> {
        let x = self.sa(states, actions, rows)?;
        let a = self.q1_target.predict(&x, rows)?;
        let b = self.q2_target.predict(&x, rows)?;
        Ok(a.iter().zip(&b).map(|(a, b)| a.min(*b)).collect())
    }

    /// Taped `min(Q1, Q2)`; returns values and dL/d(action) given dL/d(min).
    pub(crate) fn q_min_action_grad(
        &self,
        states: &[f64],
        actions: &[f64],
        rows: usize,
        upstream: impl Fn(usize) -> f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let x = self.sa(states, actions, rows)?;
        let (a, ta) = self.q1.forward_batch(&x, rows)?;
        let (b, tb) = self.q2.forward_batch(&x, rows)?;
        let mut vals = Vec::with_capacity(rows);
        let mut ga = vec![0.0; rows];
        let mut gb = vec![0.0; rows];
        for r in 0..rows {
            let g = upstream(r);
            if a[r] <= b[r] {
                vals.push(a[r]);
                ga[r] = g;
            } else {
                vals.push(b[r]);
                gb[r] = g;
            }
        }
        let ia = self.q1.backward(&ta, &ga)?.input;
        let ib = self.q2.backward(&tb, &gb)?.input;
        let w = self.state_dim + self.action_dim;
        let mut grad = Vec::with_capacity(rows * self.action_dim);
        for r in 0..rows {
            for j in self.state_dim..w {
                grad.push(ia[r * w + j] + ib[r * w + j]);
            }
        }
        Ok((vals, grad))
    }

    fn fit_q(&self, batch: &Batch, targets: Vec<f64>) -> Result<QLoss> {
        if let Some(i) = targets.iter().position(|y| !y.is_finite()) {
            return Err(Error::Training(format!("non-finite Bellman target {} at row {i}", targets[i])));
        }
        let n = batch.size;
        let x = self.sa(&batch.states, &batch.actions, n)?;
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(2);
        for net in [&self.q1, &self.q2] {
            let (q, tape) = net.forward_batch(&x, n)?;
            let mut g = Vec::with_capacity(n);
            let mut sq = 0.0;
            for (qi, yi) in q.iter().zip(&targets) {
                let d = qi - yi;
                sq += d * d;
                g.push(2.0 * d / n as f64);
            }
            loss += sq / n as f64;
            grads.push(net.backward(&tape, &g)?.params);
        }
        let q2_grads = grads.pop().unwrap();
        let q1_grads = grads.pop().unwrap();
        Ok(QLoss {
            loss,
            q1_grads,
            q2_grads,
            targets,
        })
    }

    /// Moves both target critics toward the online ones.
    pub fn polyak_update(&mut self, rho: f64) -> Result<()> {
        ema_update(self.q1_target.params_mut(), self.q1.params(), rho)?;
        ema_update(self.q2_target.params_mut(), self.q2.params(), rho)
    }
}

/// Clipped double-Q loss: `y = r + (1−done)·γ·min_j Q_j⁻(s', a')` with `a'`
/// drawn once per row from `policy_target`; `Σ_i mean (y − Q_i(s, a))²`.
pub fn q_loss_cpql(critics: &CriticSet, policy_target: &ConsistencyPolicy, batch: &Batch, rng: &mut Rng) -> Result<QLoss> {
    batch.ensure_non_empty()?;
    let noise = policy_target.initial_noise(batch.size, rng);
    q_loss_cpql_with_noise(critics, policy_target, batch, &noise)
}

/// As [`q_loss_cpql`] with fixed maximum-noise starts for the next actions.
pub fn q_loss_cpql_with_noise(
    critics: &CriticSet,
    policy_target: &ConsistencyPolicy,
    batch: &Batch,
    noise: &[f64],
) -> Result<QLoss> {
    batch.ensure_non_empty()?;
    let next_actions = policy_target.sample_actions_from_noise(&batch.next_states, noise)?;
    let next_q = critics.q_min_target(&batch.next_states, &next_actions, batch.size)?;
    let targets = bellman_targets(critics.gamma, batch, &next_q);
    critics.fit_q(batch, targets)
}

fn bellman_targets(gamma: f64, batch: &Batch, next_value: &[f64]) -> Vec<f64> {
    (0..batch.size)
        .map(|i| batch.rewards[i] + (1.0 - batch.dones[i]) * gamma * next_value[i])
        .collect()
}

/// Expectile value loss: `mean L_τ(min_j Q_j⁻(s, a) − V(s))`, gradients for V only.
pub fn v_loss_cpiql(critics: &CriticSet, batch: &Batch) -> Result<LossGrad> {
    batch.ensure_non_empty()?;
    let v = critics
        .v
        .as_ref()
        .ok_or_else(|| Error::usage("value loss needs a critic set with a V network (cpiql mode)"))?;
    let n = batch.size;
    let q = critics.q_min_target(&batch.states, &batch.actions, n)?;
    let (vals, tape) = v.forward_batch(&batch.states, n)?;
    let mut loss = 0.0;
    let mut g = Vec::with_capacity(n);
    for (qi, vi) in q.iter().zip(&vals) {
        let u = qi - vi;
        loss += expectile_loss(u, critics.tau);
        g.push(-2.0 * expectile_weight(u, critics.tau) * u / n as f64);
    }
    Ok(LossGrad {
        loss: loss / n as f64,
        grads: v.backward(&tape, &g)?.params,
    })
}

/// Implicit-Q loss: `y = r + (1−done)·γ·V(s')`; no next-action sampling.
pub fn q_loss_cpiql(critics: &CriticSet, batch: &Batch) -> Result<QLoss> {
    batch.ensure_non_empty()?;
    let v = critics
        .v
        .as_ref()
        .ok_or_else(|| Error::usage("implicit Q loss needs a V network (cpiql mode)"))?;
    let next_v = v.predict(&batch.next_states, batch.size)?;
    let targets = bellman_targets(critics.gamma, batch, &next_v);
    critics.fit_q(batch, targets)
}

pub fn polyak_update(critics: &mut CriticSet, rho: f64) -> Result<()> {
    critics.polyak_update(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetHeader, Transition};
    use crate::schedule::DiffusionSchedule;

    /// Net with all-zero weights and output bias `c`: a constant function.
    fn constant(input: usize, c: f64) -> Mlp {
        let mut net = Mlp::zeros(&[input, 4, 4, 1], true).unwrap();
        let n = net.param_count();
        net.params_mut()[n - 1] = c;
        net
    }

    fn batch(rows: &[(f64, f64, f64, bool)]) -> Batch {
        let ts: Vec<Transition> = rows
            .iter()
            .map(|&(s, a, r, d)| Transition {
                state: vec![s],
                action: vec![a],
                reward: r,
                next_state: vec![s + 0.1],
                done: d,
            })
            .collect();
        let refs: Vec<&Transition> = ts.iter().collect();
        Batch::from_transitions(DatasetHeader { state_dim: 1, action_dim: 1 }, &refs)
    }

    fn policy(seed: u64) -> ConsistencyPolicy {
        ConsistencyPolicy::new(1, 1, 8, DiffusionSchedule::default(), vec![-1.0], vec![1.0], &mut Rng::new(seed))
            .unwrap()
    }

    #[test]
    fn expectile_examples() {
        assert!((expectile_loss(1.0, 0.7) - 0.7).abs() < 1e-15);
        assert!((expectile_loss(-1.0, 0.7) - 0.3).abs() < 1e-15);
        for i in -20..=20 {
            let u = i as f64 * 0.1;
            assert!((expectile_loss(u, 0.5) - 0.5 * u * u).abs() < 1e-15);
            if u > 0.0 {
                assert!(expectile_loss(u, 0.7) > expectile_loss(-u, 0.7));
            }
        }
    }

    #[test]
    fn targets_follow_min_and_terminal_mask() {
        let mut c = CriticSet::new(1, 1, 4, false, 0.9, 0.7, &mut Rng::new(0)).unwrap();
        c.q1_target = constant(2, 2.0);
        c.q2_target = constant(2, 5.0);
        let b = batch(&[(0.0, 0.1, 1.0, false), (0.5, -0.2, 1.0, true)]);
        let p = policy(1);
        let out = q_loss_cpql(&c, &p, &b, &mut Rng::new(2)).unwrap();
        assert!((out.targets[0] - 2.8).abs() < 1e-12);
        assert_eq!(out.targets[1], 1.0);

        // swapping the targets leaves y unchanged
        std::mem::swap(&mut c.q1_target, &mut c.q2_target);
        let swapped = q_loss_cpql(&c, &p, &b, &mut Rng::new(2)).unwrap();
        assert_eq!(swapped.targets, out.targets);

        c.gamma = 0.0;
        let myopic = q_loss_cpql(&c, &p, &b, &mut Rng::new(2)).unwrap();
        assert_eq!(myopic.targets, vec![1.0, 1.0]);
    }

    #[test]
    fn non_finite_target_is_training_error() {
        let mut c = CriticSet::new(1, 1, 4, false, 0.9, 0.7, &mut Rng::new(0)).unwrap();
        c.q1_target = constant(2, f64::INFINITY);
        c.q2_target = constant(2, f64::INFINITY);
        let b = batch(&[(0.0, 0.1, 1.0, false)]);
        let err = q_loss_cpql(&c, &policy(1), &b, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }

    #[test]
    fn cpiql_losses_need_value_net() {
        let c = CriticSet::new(1, 1, 4, false, 0.9, 0.7, &mut Rng::new(0)).unwrap();
        let b = batch(&[(0.0, 0.1, 1.0, false)]);
        assert!(matches!(v_loss_cpiql(&c, &b), Err(Error::Usage(_))));
        assert!(matches!(q_loss_cpiql(&c, &b), Err(Error::Usage(_))));
    }

    #[test]
    fn empty_batch_rejected() {
        let c = CriticSet::new(1, 1, 4, true, 0.9, 0.7, &mut Rng::new(0)).unwrap();
        let b = batch(&[]);
        assert!(q_loss_cpql(&c, &policy(0), &b, &mut Rng::new(0)).is_err());
        assert!(v_loss_cpiql(&c, &b).is_err());
        assert!(q_loss_cpiql(&c, &b).is_err());
    }

    #[test]
    fn implicit_q_targets() {
        let mut c = CriticSet::new(1, 1, 4, true, 0.9, 0.7, &mut Rng::new(0)).unwrap();
        c.v = Some(constant(1, 3.0));
        let b = batch(&[(0.0, 0.1, 1.0, false), (0.5, -0.2, 2.0, true)]);
        let out = q_loss_cpiql(&c, &b).unwrap();
        assert!((out.targets[0] - (1.0 + 0.9 * 3.0)).abs() < 1e-12);
        assert_eq!(out.targets[1], 2.0);
        c.v = Some(constant(1, 0.0));
        let out = q_loss_cpiql(&c, &b).unwrap();
        assert_eq!(out.targets, vec![1.0, 2.0]);
    }

    #[test]
    fn value_loss_zero_when_v_matches_min_q() {
        let mut c = CriticSet::new(1, 1, 4, true, 0.9, 0.5, &mut Rng::new(0)).unwrap();
        c.q1_target = constant(2, 1.5);
        c.q2_target = constant(2, 4.0);
        c.v = Some(constant(1, 1.5));
        let b = batch(&[(0.0, 0.1, 1.0, false), (0.3, 0.2, 0.0, false)]);
        let out = v_loss_cpiql(&c, &b).unwrap();
        assert_eq!(out.loss, 0.0);
        // τ = 0.5: half squared error
        c.v = Some(constant(1, 0.5));
        let out = v_loss_cpiql(&c, &b).unwrap();
        assert!((out.loss - 0.5).abs() < 1e-12);
    }

    #[test]
    fn targets_start_equal_and_polyak_moves_them() {
        let mut c = CriticSet::new(2, 1, 8, true, 0.99, 0.7, &mut Rng::new(3)).unwrap();
        assert_eq!(c.q1, c.q1_target);
        assert_eq!(c.q2, c.q2_target);
        assert!(c.q1.same_architecture(&c.q1_target));
        let before = c.q1_target.clone();
        for p in c.q1.params_mut() {
            *p += 1.0;
        }
        polyak_update(&mut c, 1.0).unwrap();
        assert_eq!(c.q1_target, before);
        polyak_update(&mut c, 0.0).unwrap();
        assert_eq!(c.q1_target.params(), c.q1.params());
    }
}
