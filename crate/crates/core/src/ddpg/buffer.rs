use std::collections::VecDeque;

use rand::Rng as _;

use super::Transition;
use crate::error::{Error, Result};
use crate::seeds::Rng;

/// Bounded FIFO experience store; pushing past capacity evicts the oldest.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self { capacity, entries: VecDeque::with_capacity(capacity.min(1 << 20)) }
    }

    /// Buffer sized to and filled with `data`.
    pub fn from_transitions(data: &[Transition]) -> Self {
        let mut b = Self::new(data.len().max(1));
        b.extend(data.iter().cloned());
        b
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a transition, returning the evicted one if the buffer was full.
    pub fn push(&mut self, t: Transition) -> Option<Transition> {
        let evicted = if self.entries.len() == self.capacity { self.entries.pop_front() } else { None };
        self.entries.push_back(t);
        evicted
    }

    pub fn extend(&mut self, items: impl IntoIterator<Item = Transition>) {
        for t in items {
            self.push(t);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.entries.get(i)
    }

    /// Uniform sample of `m` entries with replacement.
    pub fn sample<'a>(&'a self, m: usize, rng: &mut Rng) -> Result<Vec<&'a Transition>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..m).map(|_| &self.entries[rng.random_range(0..self.entries.len())]).collect())
    }
}
