use super::config::{Algo, TrainConfig};
use crate::critic::{q_loss_cpiql, q_loss_cpql, v_loss_cpiql, CriticSet};
use crate::data::Batch;
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::numerics::{ema_update, AdamState, Rng};
use crate::policy::{policy_loss_total, ConsistencyPolicy};

/// Policy, its EMA copy, critics and optimiser state.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: ConsistencyPolicy,
    pub policy_target: ConsistencyPolicy,
    pub critics: CriticSet,
    opt_policy: AdamState,
    opt_q1: AdamState,
    opt_q2: AdamState,
    opt_v: Option<AdamState>,
}

/// Scalars from one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub policy_loss: f64,
    pub bc_loss: f64,
    pub guidance: f64,
    pub q_loss: f64,
    pub v_loss: Option<f64>,
}

impl StepStats {
    fn first_nonfinite(&self) -> Option<(&'static str, f64)> {
        [
            ("policy_loss", self.policy_loss),
            ("bc_loss", self.bc_loss),
            ("guidance", self.guidance),
            ("q_loss", self.q_loss),
            ("v_loss", self.v_loss.unwrap_or(0.0)),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
    }
}

impl Agent {
    pub fn new(cfg: &TrainConfig, spec: &EnvSpec, rng: &mut Rng) -> Result<Self> {
        let policy = ConsistencyPolicy::new(
            spec.state_dim,
            spec.action_dim,
            cfg.hidden,
            cfg.schedule()?,
            spec.action_low.clone(),
            spec.action_high.clone(),
            rng,
        )?;
        let critics = CriticSet::new(
            spec.state_dim,
            spec.action_dim,
            cfg.hidden,
            cfg.mode == Algo::Cpiql,
            cfg.gamma,
            cfg.tau,
            rng,
        )?;
        let mut agent = Self::from_parts(policy.clone(), policy, critics)?;
        agent.set_exec(cfg.exec);
        Ok(agent)
    }

    /// Wraps existing networks with fresh optimiser state.
    pub fn from_parts(policy: ConsistencyPolicy, policy_target: ConsistencyPolicy, critics: CriticSet) -> Result<Self> {
        if !policy.net.same_architecture(&policy_target.net) {
            return Err(Error::usage("policy and target policy differ in architecture"));
        }
        if critics.state_dim() != policy.state_dim() || critics.action_dim() != policy.action_dim() {
            return Err(Error::usage("critic and policy dimensions differ"));
        }
        Ok(Self {
            opt_policy: AdamState::new(policy.net.param_count()),
            opt_q1: AdamState::new(critics.q1.param_count()),
            opt_q2: AdamState::new(critics.q2.param_count()),
            opt_v: critics.v.as_ref().map(|v| AdamState::new(v.param_count())),
            policy,
            policy_target,
            critics,
        })
    }

    pub fn set_exec(&mut self, mode: crate::numerics::ExecMode) {
        self.policy.net.set_exec(mode);
        self.policy_target.net.set_exec(mode);
        let c = &mut self.critics;
        for net in [&mut c.q1, &mut c.q2, &mut c.q1_target, &mut c.q2_target] {
            net.set_exec(mode);
        }
        if let Some(v) = &mut c.v {
            v.set_exec(mode);
        }
    }

    /// Critic step: expectile V then implicit Q for cpiql, clipped double-Q for cpql.
    /// Returns `(q_loss, v_loss)`.
    pub fn critic_step(&mut self, cfg: &TrainConfig, batch: &Batch, rng: &mut Rng) -> Result<(f64, Option<f64>)> {
        let v_loss = match cfg.mode {
            Algo::Cpiql => {
                let g = v_loss_cpiql(&self.critics, batch)?;
                let v = self.critics.v.as_mut().expect("cpiql agent has a V network");
                self.opt_v
                    .as_mut()
                    .expect("cpiql agent has V optimiser state")
                    .step(v.params_mut(), &g.grads, cfg.lr_critic)?;
                Some(g.loss)
            }
            Algo::Cpql => None,
        };
        let q = match cfg.mode {
            Algo::Cpql => q_loss_cpql(&self.critics, &self.policy_target, batch, rng)?,
            Algo::Cpiql => q_loss_cpiql(&self.critics, batch)?,
        };
        self.opt_q1.step(self.critics.q1.params_mut(), &q.q1_grads, cfg.lr_critic)?;
        self.opt_q2.step(self.critics.q2.params_mut(), &q.q2_grads, cfg.lr_critic)?;
        Ok((q.loss, v_loss))
    }

    pub fn policy_step(&mut self, cfg: &TrainConfig, batch: &Batch, rng: &mut Rng) -> Result<(f64, f64, f64)> {
        let l = policy_loss_total(
            &self.policy,
            &self.policy_target,
            &self.critics,
            batch,
            cfg.alpha,
            cfg.eta,
            cfg.loss_mode,
            rng,
        )?;
        self.opt_policy.step(self.policy.net.params_mut(), &l.grads, cfg.lr_policy)?;
        Ok((l.total, l.bc, l.guidance))
    }

    pub fn update_targets(&mut self, rho: f64) -> Result<()> {
        ema_update(self.policy_target.net.params_mut(), self.policy.net.params(), rho)?;
        self.critics.polyak_update(rho)
    }

    /// One full iteration: critic, then policy, then EMA targets.
    pub fn update(&mut self, cfg: &TrainConfig, batch: &Batch, rng: &mut Rng) -> Result<StepStats> {
        let (q_loss, v_loss) = self.critic_step(cfg, batch, rng)?;
        let (policy_loss, bc_loss, guidance) = self.policy_step(cfg, batch, rng)?;
        let stats = StepStats {
            policy_loss,
            bc_loss,
            guidance,
            q_loss,
            v_loss,
        };
        if let Some((name, v)) = stats.first_nonfinite() {
            return Err(Error::Training(format!("non-finite {name} = {v}")));
        }
        self.update_targets(cfg.rho_polyak)?;
        Ok(stats)
    }

    /// Mean of `min(Q1, Q2)` over the batch's own actions.
    pub fn mean_q(&self, batch: &Batch) -> Result<f64> {
        let q = self.critics.q_min(&batch.states, &batch.actions, batch.size)?;
        Ok(q.iter().sum::<f64>() / q.len().max(1) as f64)
    }

    pub fn policy_updates(&self) -> u64 {
        self.opt_policy.steps()
    }
}
