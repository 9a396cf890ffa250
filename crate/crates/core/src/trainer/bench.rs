use std::time::Instant;

use super::agent::Agent;
use super::config::TrainConfig;
use super::eval::Actor;
use crate::data::{generate_dataset, Batch, DatasetHeader, Transition};
use crate::envs::{make_env, Env};
use crate::error::{Error, Result};
use crate::numerics::{ExecMode, Rng, DEFAULT_HIDDEN};
use crate::policy::{check_steps, ConsistencyPolicy, DenoiserPolicy};

/// What to measure and at which scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub env_name: String,
    pub hidden: usize,
    pub batch: usize,
    /// Training iterations timed for the IPS figure; 0 skips it.
    pub train_iters: usize,
    /// Environment steps timed for the one-step sampler.
    pub sample_steps: usize,
    /// Environment steps timed per Euler configuration.
    pub euler_sample_steps: usize,
    pub euler_steps: Vec<usize>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            env_name: "pendulum-swingup".into(),
            hidden: DEFAULT_HIDDEN,
            batch: 256,
            train_iters: 5000,
            sample_steps: 50_000,
            euler_sample_steps: 10_000,
            euler_steps: vec![5, 15],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerResult {
    pub n_steps: usize,
    pub sps: f64,
    pub forward_passes_per_action: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// Training iterations per second (`None` when skipped).
    pub ips_consistency: Option<f64>,
    pub sps_consistency: f64,
    pub consistency_passes_per_action: f64,
    pub euler: Vec<EulerResult>,
}

impl BenchReport {
    /// One-step SPS divided by the SPS of the `n`-step Euler sampler.
    pub fn speedup(&self, n: usize) -> Option<f64> {
        self.euler
            .iter()
            .find(|e| e.n_steps == n)
            .map(|e| self.sps_consistency / e.sps)
    }
}

/// Steps the environment `steps` times, acting with `actor` and resetting at
/// episode ends. Returns steps per second.
fn time_rollout<A: Actor + ?Sized>(actor: &A, env: &Env, steps: usize, rng: &mut Rng) -> Result<f64> {
    let horizon = env.spec().horizon;
    let start = Instant::now();
    let mut state = env.reset(None);
    let mut t = 0;
    for _ in 0..steps {
        let mut a = actor.act(&state, rng)?;
        env.clip_action(&mut a);
        let step = env.step(&state, &a);
        t += 1;
        if step.done || t == horizon {
            state = env.reset(None);
            t = 0;
        } else {
            state = step.next_state;
        }
    }
    Ok(steps as f64 / start.elapsed().as_secs_f64())
}

/// Timing runs single-threaded so ratios do not depend on core count.
pub fn benchmark(bc: &BenchConfig) -> Result<BenchReport> {
    if bc.sample_steps == 0 || bc.euler_sample_steps == 0 {
        return Err(Error::config("benchmark step counts must be positive"));
    }
    let env = make_env(&bc.env_name)?;
    let spec = env.spec().clone();
    let mut rng = Rng::new(bc.seed);
    let cfg = TrainConfig {
        hidden: bc.hidden,
        batch: bc.batch,
        env_name: bc.env_name.clone(),
        exec: ExecMode::Sequential,
        ..TrainConfig::default()
    };
    cfg.validate()?;
    let boundaries = cfg.schedule()?.len();
    for &n in &bc.euler_steps {
        check_steps(n, boundaries)?;
    }

    let ips_consistency = if bc.train_iters > 0 {
        let mut agent = Agent::new(&cfg, &spec, &mut rng)?;
        let data = generate_dataset(&bc.env_name, "random", bc.batch.max(1000), &mut rng)?;
        let header = DatasetHeader {
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
        };
        let start = Instant::now();
        for _ in 0..bc.train_iters {
            let picks: Vec<&Transition> = (0..bc.batch).map(|_| &data[rng.below(data.len())]).collect();
            let batch = Batch::from_transitions(header, &picks);
            agent.update(&cfg, &batch, &mut rng)?;
        }
        Some(bc.train_iters as f64 / start.elapsed().as_secs_f64())
    } else {
        None
    };

    let mut policy = ConsistencyPolicy::new(
        spec.state_dim,
        spec.action_dim,
        bc.hidden,
        cfg.schedule()?,
        spec.action_low.clone(),
        spec.action_high.clone(),
        &mut rng,
    )?;
    policy.net.set_exec(ExecMode::Sequential);
    policy.net.reset_forward_rows();
    let sps_consistency = time_rollout(&policy, &env, bc.sample_steps, &mut rng)?;
    let consistency_passes_per_action = policy.net.forward_rows() as f64 / bc.sample_steps as f64;

    let mut euler = Vec::new();
    for &n in &bc.euler_steps {
        let mut dp = DenoiserPolicy::new(
            spec.state_dim,
            spec.action_dim,
            bc.hidden,
            cfg.schedule()?,
            spec.action_low.clone(),
            spec.action_high.clone(),
            n,
            &mut rng,
        )?;
        dp.inner.net.set_exec(ExecMode::Sequential);
        dp.net().reset_forward_rows();
        let sps = time_rollout(&dp, &env, bc.euler_sample_steps, &mut rng)?;
        euler.push(EulerResult {
            n_steps: n,
            sps,
            forward_passes_per_action: dp.net().forward_rows() as f64 / bc.euler_sample_steps as f64,
        });
    }
    Ok(BenchReport {
        ips_consistency,
        sps_consistency,
        consistency_passes_per_action,
        euler,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_and_shape() {
        let bc = BenchConfig {
            env_name: "point-mass-2d".into(),
            hidden: 8,
            batch: 8,
            train_iters: 3,
            sample_steps: 50,
            euler_sample_steps: 20,
            euler_steps: vec![2, 5],
            seed: 1,
        };
        let r = benchmark(&bc).unwrap();
        assert_eq!(r.consistency_passes_per_action, 1.0);
        assert_eq!(r.euler[0].forward_passes_per_action, 2.0);
        assert_eq!(r.euler[1].forward_passes_per_action, 5.0);
        assert!(r.ips_consistency.unwrap() > 0.0);
        assert!(r.speedup(5).unwrap() > 0.0);
        assert!(r.speedup(7).is_none());
    }
}
