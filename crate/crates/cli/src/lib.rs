//! Command-line front end. [`run`] parses arguments, dispatches one
//! subcommand and maps the outcome to an exit code:
//!
//! - `0` success
//! - `1` usage or configuration error
//! - `2` runtime failure (I/O, corrupt file, diverged training)

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use cpql::data::{generate_dataset, write_dataset, DatasetHeader};
use cpql::envs::make_env;
use cpql::numerics::Rng;
use cpql::trainer::{benchmark, evaluate, read_checkpoint, train, BenchConfig, MetricsRow, TrainConfig};
use cpql::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cpql", version, about = "Train and benchmark one-step consistency policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roll out a scripted behavior and write a dataset file.
    GenData {
        #[arg(long)]
        env: String,
        #[arg(long)]
        behavior: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a `key = value` config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// `key=value`, applied after the file in the order given.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate the policy stored in a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time one-step sampling against the multi-step Euler sampler.
    Bench {
        #[arg(long)]
        env: String,
        #[arg(long, value_delimiter = ',', default_values_t = [5, 15])]
        euler_steps: Vec<usize>,
        /// Training iterations timed for the throughput figure (0 skips it).
        #[arg(long, default_value_t = 1000)]
        iters: usize,
    },
}

fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

fn stdout_error(source: std::io::Error) -> Error {
    Error::Io {
        path: "<stdout>".into(),
        source,
    }
}

/// Runs the CLI against process stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Runs the CLI with explicit output streams. `args` includes the program name.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> cpql::Result<()> {
    match command {
        Command::GenData {
            env,
            behavior,
            n,
            out: path,
            seed,
        } => {
            let spec = make_env(&env)?.spec().clone();
            let transitions = generate_dataset(&env, &behavior, n, &mut Rng::new(seed))?;
            let header = DatasetHeader {
                state_dim: spec.state_dim,
                action_dim: spec.action_dim,
            };
            write_dataset(&path, header, &transitions)?;
            say(out, format!("wrote {} transitions to {}", transitions.len(), path.display()))
        }
        Command::Train { config, overrides } => {
            let mut cfg = TrainConfig::from_file(&config)?;
            for kv in &overrides {
                cfg.apply_override(kv)?;
            }
            cfg.validate()?;
            let mut write_failed = None;
            let mut hook = |r: &MetricsRow| {
                if let Err(e) = writeln!(out, "{}", progress_line(r)) {
                    write_failed.get_or_insert(e);
                }
            };
            let outcome = train(&cfg, Some(&mut hook))?;
            if let Some(e) = write_failed {
                return Err(stdout_error(e));
            }
            let mut done = format!("done: {} iterations, {} env steps", cfg.total_iters, outcome.env_steps);
            if let Some(p) = &cfg.metrics_path {
                done.push_str(&format!(", metrics in {}", p.display()));
            }
            if let Some(p) = &cfg.checkpoint_path {
                done.push_str(&format!(", checkpoint in {}", p.display()));
            }
            say(out, done)
        }
        Command::Eval {
            checkpoint,
            env,
            episodes,
            seed,
        } => {
            let (cfg, agent) = read_checkpoint(&checkpoint)?;
            let env = make_env(&env)?;
            let spec = env.spec();
            if spec.state_dim != agent.policy.state_dim() || spec.action_dim != agent.policy.action_dim() {
                return Err(Error::Usage(format!(
                    "checkpoint was trained on {} and does not fit {}",
                    cfg.env_name, spec.name
                )));
            }
            let (mean, std) = evaluate(&agent.policy, &env, episodes, cfg.exec, &mut Rng::new(seed))?;
            say(out, format!("episodes={episodes} eval_return_mean={mean:.6} eval_return_std={std:.6}"))
        }
        Command::Bench {
            env,
            euler_steps,
            iters,
        } => {
            let bc = BenchConfig {
                env_name: env,
                euler_steps,
                train_iters: iters,
                ..BenchConfig::default()
            };
            let report = benchmark(&bc)?;
            if let Some(ips) = report.ips_consistency {
                say(out, format!("train_ips={ips:.1}"))?;
            }
            say(
                out,
                format!(
                    "one_step sps={:.1} passes_per_action={}",
                    report.sps_consistency, report.consistency_passes_per_action
                ),
            )?;
            for e in &report.euler {
                say(
                    out,
                    format!(
                        "euler_{} sps={:.1} passes_per_action={} speedup={:.2}",
                        e.n_steps,
                        e.sps,
                        e.forward_passes_per_action,
                        report.sps_consistency / e.sps
                    ),
                )?;
            }
            Ok(())
        }
    }
}

fn say(out: &mut dyn Write, line: String) -> cpql::Result<()> {
    writeln!(out, "{line}").map_err(stdout_error)
}

/// `iter=N policy_loss=… q_loss=… eval=…`
pub fn progress_line(r: &MetricsRow) -> String {
    format!(
        "iter={} policy_loss={:.6} q_loss={:.6} eval={:.4}",
        r.iter, r.policy_loss, r.q_loss, r.eval_return_mean
    )
}
