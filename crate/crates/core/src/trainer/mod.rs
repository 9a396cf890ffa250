//! Offline and online training loops, evaluation, metrics, checkpoints and
//! the sampling-speed benchmark.

mod agent;
mod bench;
mod checkpoint;
mod config;
mod eval;
mod metrics;
mod run;

pub use agent::{Agent, StepStats};
pub use bench::{benchmark, BenchConfig, BenchReport, EulerResult};
pub use checkpoint::{read_checkpoint, read_policy, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Algo, Setting, TrainConfig};
pub use eval::{evaluate, run_episode, Actor};
pub use metrics::{MetricsRow, MetricsWriter, METRICS_COLUMNS};
pub use run::{train, train_offline, train_offline_with, train_online, LogHook, TrainOutcome};
