use crate::envs::Env;
use crate::error::{Error, Result};
use crate::numerics::par::map_indexed;
use crate::numerics::{ExecMode, Rng};
use crate::policy::{euler_sample, ConsistencyPolicy, DenoiserPolicy};

/// Anything that maps a state to an action, possibly stochastically.
pub trait Actor: Sync {
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}

impl Actor for ConsistencyPolicy {
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.sample_action(state, rng)
    }
}

impl Actor for DenoiserPolicy {
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        euler_sample(self, state, rng)
    }
}

impl<F> Actor for F
where
    F: Fn(&[f64], &mut Rng) -> Result<Vec<f64>> + Sync,
{
    fn act(&self, state: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self(state, rng)
    }
}

/// Undiscounted return of one episode from the env's nominal start state.
pub fn run_episode<A: Actor + ?Sized>(actor: &A, env: &Env, rng: &mut Rng) -> Result<f64> {
    let mut state = env.reset(None);
    let mut ret = 0.0;
    for _ in 0..env.spec().horizon {
        let mut action = actor.act(&state, rng)?;
        env.clip_action(&mut action);
        let step = env.step(&state, &action);
        ret += step.reward;
        if step.done {
            break;
        }
        state = step.next_state;
    }
    Ok(ret)
}

/// Mean and population standard deviation of episode returns.
///
/// Each episode gets its own stream split from `rng` up front, so the result
/// does not depend on `mode` or on scheduling.
pub fn evaluate<A: Actor + ?Sized>(
    actor: &A,
    env: &Env,
    episodes: usize,
    mode: ExecMode,
    rng: &mut Rng,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::usage("evaluation needs at least one episode"));
    }
    let streams: Vec<Rng> = (0..episodes).map(|_| rng.split()).collect();
    let returns = map_indexed(mode, episodes, |i| {
        let mut r = streams[i].clone();
        run_episode(actor, env, &mut r)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
