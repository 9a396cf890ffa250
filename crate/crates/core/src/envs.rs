//! Built-in deterministic control tasks.
//!
//! | name               | state | action | bounds | horizon |
//! |--------------------|-------|--------|--------|---------|
//! | `bimodal-reach`    | 1     | 1      | ±1     | 1       |
//! | `point-mass-2d`    | 4     | 2      | ±2     | 100     |
//! | `pendulum-swingup` | 3     | 1      | ±2     | 200     |
//!
//! `step` is a pure function of `(state, action)`. Only `bimodal-reach` has a
//! true terminal state; the other tasks end by time limit, which the rollout
//! code records as `done = false`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const ENV_NAMES: [&str; 3] = ["bimodal-reach", "point-mass-2d", "pendulum-swingup"];

pub const POINT_MASS_GOAL: [f64; 2] = [1.0, 1.0];
const POINT_MASS_DT: f64 = 0.1;
const POINT_MASS_DAMPING: f64 = 0.95;
const POINT_MASS_BOX: f64 = 2.0;

const PENDULUM_DT: f64 = 0.05;
const PENDULUM_MAX_SPEED: f64 = 8.0;
const PENDULUM_START_JITTER: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    BimodalReach,
    PointMass2d,
    PendulumSwingup,
}

impl EnvKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "bimodal-reach" => Ok(Self::BimodalReach),
            "point-mass-2d" => Ok(Self::PointMass2d),
            "pendulum-swingup" => Ok(Self::PendulumSwingup),
            other => Err(Error::config(format!(
                "unknown environment {other:?}; valid names: {}",
                ENV_NAMES.join(", ")
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::BimodalReach => "bimodal-reach",
            Self::PointMass2d => "point-mass-2d",
            Self::PendulumSwingup => "pendulum-swingup",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub horizon: usize,
    pub reward_range: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// A task plus a counter of how many times its dynamics were queried.
#[derive(Debug)]
pub struct Env {
    kind: EnvKind,
    spec: EnvSpec,
    steps: AtomicU64,
}

impl Clone for Env {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            spec: self.spec.clone(),
            steps: AtomicU64::new(self.step_count()),
        }
    }
}

pub fn make_env(name: &str) -> Result<Env> {
    Ok(Env::new(EnvKind::from_name(name)?))
}

/// Bimodal reward: two unit-height Gaussian bumps at ±0.8.
pub fn bimodal_reward(a: f64) -> f64 {
    (-(a - 0.8).powi(2) / 0.02).exp() + (-(a + 0.8).powi(2) / 0.02).exp()
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

impl Env {
    pub fn new(kind: EnvKind) -> Self {
        let spec = match kind {
            EnvKind::BimodalReach => EnvSpec {
                name: kind.name(),
                state_dim: 1,
                action_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                horizon: 1,
                reward_range: "(0, 1 + e^-128]; optima at a = ±0.8",
            },
            EnvKind::PointMass2d => EnvSpec {
                name: kind.name(),
                state_dim: 4,
                action_dim: 2,
                action_low: vec![-2.0; 2],
                action_high: vec![2.0; 2],
                horizon: 100,
                reward_range: "[-4√2, 0]: negative distance to (1, 1)",
            },
            EnvKind::PendulumSwingup => EnvSpec {
                name: kind.name(),
                state_dim: 3,
                action_dim: 1,
                action_low: vec![-2.0],
                action_high: vec![2.0],
                horizon: 200,
                reward_range: "(-∞, 0]: angle, speed and torque cost",
            },
        };
        Self {
            kind,
            spec,
            steps: AtomicU64::new(0),
        }
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Number of `step` calls made on this instance.
    pub fn step_count(&self) -> u64 {
        self.steps.load(Ordering::Relaxed)
    }

    /// Start state. The pendulum gets a small angle jitter when `rng` is given.
    pub fn reset(&self, rng: Option<&mut Rng>) -> Vec<f64> {
        match self.kind {
            EnvKind::BimodalReach => vec![0.0],
            EnvKind::PointMass2d => vec![0.0; 4],
            EnvKind::PendulumSwingup => {
                let jitter = rng.map_or(0.0, |r| r.uniform(-PENDULUM_START_JITTER, PENDULUM_START_JITTER));
                pendulum_obs(PI + jitter, 0.0)
            }
        }
    }

    pub fn step(&self, state: &[f64], action: &[f64]) -> Step {
        self.steps.fetch_add(1, Ordering::Relaxed);
        debug_assert_eq!(state.len(), self.spec.state_dim);
        debug_assert_eq!(action.len(), self.spec.action_dim);
        match self.kind {
            EnvKind::BimodalReach => Step {
                next_state: vec![0.0],
                reward: bimodal_reward(action[0]),
                done: true,
            },
            EnvKind::PointMass2d => {
                let mut next = vec![0.0; 4];
                for d in 0..2 {
                    let v = (POINT_MASS_DAMPING * (state[2 + d] + POINT_MASS_DT * action[d]))
                        .clamp(-POINT_MASS_BOX, POINT_MASS_BOX);
                    next[2 + d] = v;
                    next[d] = (state[d] + POINT_MASS_DT * v).clamp(-POINT_MASS_BOX, POINT_MASS_BOX);
                }
                let dist = ((next[0] - POINT_MASS_GOAL[0]).powi(2) + (next[1] - POINT_MASS_GOAL[1]).powi(2)).sqrt();
                Step {
                    next_state: next,
                    reward: -dist,
                    done: false,
                }
            }
            EnvKind::PendulumSwingup => {
                let theta = state[1].atan2(state[0]);
                let speed = state[2];
                let u = action[0];
                let reward = -(wrap_angle(theta).powi(2) + 0.1 * speed * speed + 0.001 * u * u);
                let accel = 15.0 * theta.sin() + 3.0 * u;
                let speed = (speed + PENDULUM_DT * accel).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
                let theta = theta + PENDULUM_DT * speed;
                Step {
                    next_state: pendulum_obs(theta, speed),
                    reward,
                    done: false,
                }
            }
        }
    }

    /// Clamps an action into the task bounds.
    pub fn clip_action(&self, action: &mut [f64]) {
        for ((a, lo), hi) in action.iter_mut().zip(&self.spec.action_low).zip(&self.spec.action_high) {
            *a = a.clamp(*lo, *hi);
        }
    }
}

fn pendulum_obs(theta: f64, speed: f64) -> Vec<f64> {
    vec![theta.cos(), theta.sin(), speed]
}
