//! Transitions, offline datasets and the online replay buffer.

mod format;
mod generate;
mod replay;

pub use format::{read_csv, read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
pub use generate::{generate_dataset, BEHAVIORS};
pub use replay::{ReplayBuffer, DEFAULT_CAPACITY};

use crate::error::{Error, Result};
use crate::numerics::Rng;

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub state_dim: usize,
    pub action_dim: usize,
}

impl DatasetHeader {
    pub fn check(&self, t: &Transition) -> Result<()> {
        if t.state.len() != self.state_dim
            || t.next_state.len() != self.state_dim
            || t.action.len() != self.action_dim
        {
            return Err(Error::usage(format!(
                "transition dims (s={}, a={}, s'={}) do not match header (s={}, a={})",
                t.state.len(),
                t.action.len(),
                t.next_state.len(),
                self.state_dim,
                self.action_dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub transitions: Vec<Transition>,
}

impl Dataset {
    pub fn new(header: DatasetHeader, transitions: Vec<Transition>) -> Result<Self> {
        for t in &transitions {
            header.check(t)?;
        }
        Ok(Self {
            header,
            transitions,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Uniform minibatch, with replacement.
    pub fn sample(&self, size: usize, rng: &mut Rng) -> Result<Batch> {
        if self.transitions.is_empty() {
            return Err(Error::usage("cannot sample from an empty dataset"));
        }
        let picks: Vec<&Transition> = (0..size)
            .map(|_| &self.transitions[rng.below(self.transitions.len())])
            .collect();
        Ok(Batch::from_transitions(self.header, &picks))
    }
}

/// Column-major-by-field minibatch: each field is a row-major `size × dim` buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    /// 1.0 for terminal transitions, 0.0 otherwise.
    pub dones: Vec<f64>,
}

impl Batch {
    pub fn from_transitions(header: DatasetHeader, ts: &[&Transition]) -> Self {
        let mut b = Batch {
            size: ts.len(),
            state_dim: header.state_dim,
            action_dim: header.action_dim,
            states: Vec::with_capacity(ts.len() * header.state_dim),
            actions: Vec::with_capacity(ts.len() * header.action_dim),
            rewards: Vec::with_capacity(ts.len()),
            next_states: Vec::with_capacity(ts.len() * header.state_dim),
            dones: Vec::with_capacity(ts.len()),
        };
        for t in ts {
            b.states.extend_from_slice(&t.state);
            b.actions.extend_from_slice(&t.action);
            b.rewards.push(t.reward);
            b.next_states.extend_from_slice(&t.next_state);
            b.dones.push(if t.done { 1.0 } else { 0.0 });
        }
        b
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub(crate) fn ensure_non_empty(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::usage("empty batch"));
        }
        Ok(())
    }
}
