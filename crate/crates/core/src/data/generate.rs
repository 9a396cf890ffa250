//! Scripted behaviour policies for building offline datasets.

use super::Transition;
use crate::envs::{make_env, wrap_angle, Env, EnvKind, POINT_MASS_GOAL};
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const BEHAVIORS: [&str; 3] = ["bimodal", "random", "scripted-pd"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Behavior {
    Bimodal,
    Random,
    ScriptedPd,
}

impl Behavior {
    fn parse(name: &str) -> Result<Self> {
        match name {
            "bimodal" => Ok(Self::Bimodal),
            "random" => Ok(Self::Random),
            "scripted-pd" => Ok(Self::ScriptedPd),
            other => Err(Error::config(format!(
                "unknown behavior {other:?}; valid: {}",
                BEHAVIORS.join(", ")
            ))),
        }
    }

    fn supports(self, env: EnvKind) -> bool {
        match self {
            Self::Bimodal => env == EnvKind::BimodalReach,
            Self::Random => true,
            Self::ScriptedPd => matches!(env, EnvKind::PointMass2d | EnvKind::PendulumSwingup),
        }
    }
}

fn act(behavior: Behavior, env: &Env, state: &[f64], rng: &mut Rng) -> Vec<f64> {
    let spec = env.spec();
    let mut a = match behavior {
        Behavior::Bimodal => {
            let center = if rng.below(2) == 0 { 0.8 } else { -0.8 };
            vec![center + 0.05 * rng.normal()]
        }
        Behavior::Random => spec
            .action_low
            .iter()
            .zip(&spec.action_high)
            .map(|(&lo, &hi)| rng.uniform(lo, hi))
            .collect(),
        Behavior::ScriptedPd => match env.kind() {
            EnvKind::PointMass2d => (0..2)
                .map(|d| 2.0 * (POINT_MASS_GOAL[d] - state[d]) - state[2 + d])
                .collect(),
            EnvKind::PendulumSwingup => vec![pendulum_swingup_control(state)],
            EnvKind::BimodalReach => unreachable!("checked by supports()"),
        },
    };
    env.clip_action(&mut a);
    a
}

/// Energy pumping far from upright, PD balance near it.
fn pendulum_swingup_control(state: &[f64]) -> f64 {
    let theta = wrap_angle(state[1].atan2(state[0]));
    let speed = state[2];
    if theta.abs() < 0.6 {
        return -(20.0 * theta + 4.0 * speed);
    }
    // Upright rest has energy 15 in these units.
    let energy = 0.5 * speed * speed + 15.0 * theta.cos();
    let pump = (15.0 - energy) * speed;
    if pump == 0.0 {
        2.0
    } else {
        2.0 * pump.signum()
    }
}

/// Rolls out `behavior` on `env_name` until `n` transitions are collected.
/// Time-limit ends are stored with `done = false`.
pub fn generate_dataset(env_name: &str, behavior: &str, n: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
    let env = make_env(env_name)?;
    let behavior = Behavior::parse(behavior)?;
    if !behavior.supports(env.kind()) {
        return Err(Error::config(format!(
            "behavior {behavior:?} is not available for {env_name}"
        )));
    }
    let horizon = env.spec().horizon;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut state = env.reset(Some(rng));
        for _ in 0..horizon {
            if out.len() == n {
                break;
            }
            let action = act(behavior, &env, &state, rng);
            let step = env.step(&state, &action);
            let done = step.done;
            out.push(Transition {
                state,
                action,
                reward: step.reward,
                next_state: step.next_state.clone(),
                done,
            });
            if done {
                break;
            }
            state = step.next_state;
        }
    }
    Ok(out)
}
