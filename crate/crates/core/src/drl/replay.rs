use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Minibatch with one transition per row.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(items: &[&Transition]) -> Batch {
        let m = items.len();
        let sd = items.first().map_or(0, |t| t.state.len());
        let ad = items.first().map_or(0, |t| t.action.len());
        let mut b = Batch {
            states: Array2::zeros((m, sd)),
            actions: Array2::zeros((m, ad)),
            rewards: Array1::zeros(m),
            next_states: Array2::zeros((m, sd)),
        };
        for (i, t) in items.iter().enumerate() {
            b.states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.state[..]));
            b.actions.row_mut(i).assign(&ndarray::ArrayView1::from(&t.action[..]));
            b.rewards[i] = t.reward;
            b.next_states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_state[..]));
        }
        b
    }
}

/// Fixed-capacity ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
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

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Indices of `m` distinct stored transitions.
    pub fn sample_indices<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<usize>> {
        if m > self.items.len() {
            return Err(Error::InsufficientBuffer {
                have: self.items.len(),
                need: m,
            });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), m).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self.sample_indices(m, rng)?.into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }
}
