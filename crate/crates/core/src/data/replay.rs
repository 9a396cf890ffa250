use super::{Batch, DatasetHeader, Transition};
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const DEFAULT_CAPACITY: usize = 1_000_000;

/// Fixed-capacity ring of transitions; once full, each push replaces the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    header: DatasetHeader,
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(header: DatasetHeader, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        Ok(Self {
            header,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn header(&self) -> DatasetHeader {
        self.header
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        self.header.check(&t)?;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Contents from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Result<Batch> {
        if self.items.is_empty() {
            return Err(Error::usage("cannot sample from an empty replay buffer"));
        }
        let picks: Vec<&Transition> = (0..batch_size)
            .map(|_| &self.items[rng.below(self.items.len())])
            .collect();
        Ok(Batch::from_transitions(self.header, &picks))
    }
}
