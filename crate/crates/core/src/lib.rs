//! One-step consistency policies for continuous control.
//!
//! A consistency policy maps Gaussian noise to an action in a single network
//! evaluation. It is trained with a reconstruction (or consistency) loss on
//! dataset actions plus a value-guidance term from a pair of critics, either
//! clipped double-Q critics (`cpql`) or expectile critics (`cpiql`). Training
//! runs offline from a fixed dataset or online from a replay buffer.
//!
//! Module map:
//! - [`numerics`]: MLPs, Adam, Polyak averaging, RNG
//! - [`schedule`]: noise-level boundaries, skip/out scalings, Euler step
//! - [`policy`]: consistency policy, its losses, multi-step baseline sampler
//! - [`critic`]: double-Q and expectile critics
//! - [`envs`]: built-in toy control tasks
//! - [`data`]: transitions, dataset files, replay buffer
//! - [`trainer`]: training loops, evaluation, checkpoints, benchmarking

pub mod critic;
pub mod data;
pub mod envs;
mod error;
pub mod numerics;
pub mod policy;
pub mod schedule;
pub mod trainer;

pub use error::{Error, FormatError, Result};
