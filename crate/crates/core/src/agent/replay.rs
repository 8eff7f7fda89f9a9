use crate::env::Transition;
use crate::rng::Rng;

/// Fixed-capacity ring buffer of transitions with uniform i.i.d. sampling
/// (with replacement) over the current contents.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self {
            capacity,
            data: Vec::with_capacity(capacity.min(4096)),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.data[index]
    }

    /// Uniform i.i.d. batch (with replacement).
    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Vec<Transition> {
        assert!(!self.data.is_empty(), "cannot sample from an empty buffer");
        (0..batch_size)
            .map(|_| self.data[rng.range_usize(self.data.len())].clone())
            .collect()
    }
}
