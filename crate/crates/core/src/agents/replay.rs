use rand::seq::index;
use rand::Rng;

use crate::td::Transition;

/// Transition stored for off-policy learning, with the pre-squash action.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTransition {
    pub transition: Transition,
    pub raw_action: Vec<f64>,
}

/// Fixed-capacity ring buffer. Oldest entries are overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T = StoredTransition> {
    items: Vec<T>,
    capacity: usize,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            next: 0,
        }
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

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    /// Indices of `batch` distinct entries drawn uniformly.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl Rng) -> Option<Vec<usize>> {
        if batch > self.items.len() {
            return None;
        }
        Some(index::sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Option<Vec<&T>> {
        self.sample_indices(batch, rng)
            .map(|idx| idx.into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}
