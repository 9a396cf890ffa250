use std::time::Instant;

use super::agent::{Agent, StepStats};
use super::checkpoint::write_checkpoint;
use super::config::{Setting, TrainConfig};
use super::eval::evaluate;
use super::metrics::{MetricsRow, MetricsWriter};
use crate::data::{read_dataset, Batch, Dataset, ReplayBuffer, Transition};
use crate::envs::{make_env, Env};
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: Agent,
    pub metrics: Vec<MetricsRow>,
    /// Environment steps taken for data collection (zero offline; evaluation
    /// episodes run on a separate environment and are not counted).
    pub env_steps: u64,
    /// Replay size when the first gradient update ran (online only).
    pub replay_len_at_first_update: Option<usize>,
    pub replay_len: usize,
}

/// Called after each logged row, e.g. to print progress.
pub type LogHook<'a> = &'a mut dyn FnMut(&MetricsRow);

struct Logger<'c, 'h> {
    cfg: &'c TrainConfig,
    eval_env: Env,
    eval_rng: Rng,
    writer: Option<MetricsWriter>,
    rows: Vec<MetricsRow>,
    start: Instant,
    hook: Option<LogHook<'h>>,
}

impl<'c, 'h> Logger<'c, 'h> {
    fn new(cfg: &'c TrainConfig, eval_rng: Rng, hook: Option<LogHook<'h>>) -> Result<Self> {
        let writer = cfg
            .metrics_path
            .as_ref()
            .map(|p| MetricsWriter::create(p, cfg))
            .transpose()?;
        Ok(Self {
            cfg,
            eval_env: make_env(&cfg.env_name)?,
            eval_rng,
            writer,
            rows: Vec::new(),
            start: Instant::now(),
            hook,
        })
    }

    fn due(&self, iter: usize) -> bool {
        iter == self.cfg.total_iters || (self.cfg.eval_every > 0 && iter % self.cfg.eval_every == 0)
    }

    fn log(&mut self, iter: usize, agent: &Agent, stats: StepStats, batch: Option<&Batch>) -> Result<()> {
        let mean_q_batch = match batch {
            Some(b) => agent.mean_q(b)?,
            None => 0.0,
        };
        let (eval_return_mean, eval_return_std) = evaluate(
            &agent.policy,
            &self.eval_env,
            self.cfg.eval_episodes,
            self.cfg.exec,
            &mut self.eval_rng,
        )?;
        let row = MetricsRow {
            iter,
            policy_loss: stats.policy_loss,
            bc_loss_part: stats.bc_loss,
            guidance_part: stats.guidance,
            q_loss: stats.q_loss,
            v_loss: stats.v_loss,
            mean_q_batch,
            eval_return_mean,
            eval_return_std,
            wallclock_s: if self.cfg.log_wallclock {
                self.start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        if let Some(w) = &mut self.writer {
            w.write_row(&row)?;
        }
        if let Some(p) = &self.cfg.checkpoint_path {
            write_checkpoint(p, self.cfg, agent)?;
        }
        if let Some(h) = &mut self.hook {
            h(&row);
        }
        self.rows.push(row);
        Ok(())
    }

    /// Records why a run stopped before returning the error.
    fn abort(&mut self, iter: usize, err: Error) -> Error {
        if let Some(w) = &mut self.writer {
            let _ = w.write_abort(iter, &err.to_string());
        }
        err
    }
}

/// Builds the streams for a run: (agent init, training, evaluation).
fn streams(seed: u64) -> (Rng, Rng, Rng) {
    let mut root = Rng::new(seed);
    (root.split(), root.split(), root.split())
}

/// Offline training on a dataset already in memory. Never steps an environment
/// except for evaluation.
pub fn train_offline_with(cfg: &TrainConfig, data: &Dataset, hook: Option<LogHook<'_>>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let env = make_env(&cfg.env_name)?;
    let spec = env.spec();
    if data.header.state_dim != spec.state_dim || data.header.action_dim != spec.action_dim {
        return Err(Error::config(format!(
            "dataset dims (s={}, a={}) do not match {} (s={}, a={})",
            data.header.state_dim, data.header.action_dim, spec.name, spec.state_dim, spec.action_dim
        )));
    }
    if data.is_empty() {
        return Err(Error::config("dataset is empty"));
    }
    let (mut init_rng, mut rng, eval_rng) = streams(cfg.seed);
    let mut agent = Agent::new(cfg, spec, &mut init_rng)?;
    let mut log = Logger::new(cfg, eval_rng, hook)?;
    if cfg.total_iters == 0 {
        log.log(0, &agent, StepStats::default(), None)?;
    }
    for iter in 1..=cfg.total_iters {
        let step = data
            .sample(cfg.batch, &mut rng)
            .and_then(|batch| agent.update(cfg, &batch, &mut rng).map(|s| (s, batch)));
        let (stats, batch) = step.map_err(|e| log.abort(iter, e))?;
        if log.due(iter) {
            log.log(iter, &agent, stats, Some(&batch))?;
        }
    }
    Ok(TrainOutcome {
        agent,
        metrics: log.rows,
        env_steps: 0,
        replay_len_at_first_update: None,
        replay_len: 0,
    })
}

/// Offline training reading `cfg.dataset_path`.
pub fn train_offline(cfg: &TrainConfig, hook: Option<LogHook<'_>>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.setting != Setting::Offline {
        return Err(Error::config("train_offline needs setting = offline"));
    }
    let path = cfg
        .dataset_path
        .as_ref()
        .ok_or_else(|| Error::config("offline training needs dataset_path"))?;
    let data = read_dataset(path)?;
    train_offline_with(cfg, &data, hook)
}

/// Online training: `warmup` steps with the untrained policy fill the replay
/// buffer, then each iteration takes one environment step and one update.
pub fn train_online(cfg: &TrainConfig, hook: Option<LogHook<'_>>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.setting != Setting::Online {
        return Err(Error::config("train_online needs setting = online"));
    }
    let env = make_env(&cfg.env_name)?;
    let spec = env.spec().clone();
    let (mut init_rng, mut rng, eval_rng) = streams(cfg.seed);
    let mut agent = Agent::new(cfg, &spec, &mut init_rng)?;
    let mut replay = ReplayBuffer::new(
        crate::data::DatasetHeader {
            state_dim: spec.state_dim,
            action_dim: spec.action_dim,
        },
        cfg.capacity,
    )?;
    let mut log = Logger::new(cfg, eval_rng, hook)?;

    let mut state = env.reset(Some(&mut rng));
    let mut t = 0usize;
    let mut collect = |agent: &Agent, replay: &mut ReplayBuffer, rng: &mut Rng| -> Result<()> {
        let mut action = agent.policy.sample_action(&state, rng)?;
        env.clip_action(&mut action);
        let step = env.step(&state, &action);
        t += 1;
        let end = step.done || t >= spec.horizon;
        replay.push(Transition {
            state: std::mem::take(&mut state),
            action,
            reward: step.reward,
            next_state: step.next_state.clone(),
            done: step.done,
        })?;
        if end {
            state = env.reset(Some(rng));
            t = 0;
        } else {
            state = step.next_state;
        }
        Ok(())
    };

    for _ in 0..cfg.warmup {
        collect(&agent, &mut replay, &mut rng)?;
    }
    let mut first_update = None;
    if cfg.total_iters == 0 {
        log.log(0, &agent, StepStats::default(), None)?;
    }
    for iter in 1..=cfg.total_iters {
        let step = collect(&agent, &mut replay, &mut rng).and_then(|_| {
            first_update.get_or_insert(replay.len());
            let batch = replay.sample(cfg.batch, &mut rng)?;
            agent.update(cfg, &batch, &mut rng).map(|s| (s, batch))
        });
        let (stats, batch) = step.map_err(|e| log.abort(iter, e))?;
        if log.due(iter) {
            log.log(iter, &agent, stats, Some(&batch))?;
        }
    }
    Ok(TrainOutcome {
        agent,
        metrics: log.rows,
        env_steps: env.step_count(),
        replay_len_at_first_update: first_update,
        replay_len: replay.len(),
    })
}

/// Dispatches on `cfg.setting`.
pub fn train(cfg: &TrainConfig, hook: Option<LogHook<'_>>) -> Result<TrainOutcome> {
    match cfg.setting {
        Setting::Offline => train_offline(cfg, hook),
        Setting::Online => train_online(cfg, hook),
    }
}
