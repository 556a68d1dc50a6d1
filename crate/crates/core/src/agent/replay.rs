use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pqc::{ControlVector, MarginalVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    /// Quantum-layer input; `None` for classical middle blocks.
    pub q_i: Option<ControlVector>,
    pub q_o: Option<MarginalVector>,
    pub r: f64,
    pub s_next: Vec<f64>,
    /// True only for terminal states, not for step-cap truncation.
    pub done: bool,
}

/// Batched view of sampled transitions.
#[derive(Clone, Debug)]
pub struct Batch {
    pub s: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Vec<f64>,
    pub s_next: Array2<f64>,
    pub done: Vec<bool>,
    /// Indices into the buffer, for pulling the quantum pairs.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Ring buffer with uniform sampling (with replacement).
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            items: Vec::new(),
            head: 0,
        })
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.s.len() != self.obs_dim || t.s_next.len() != self.obs_dim {
            return Err(Error::dim("transition observation", self.obs_dim, t.s.len()));
        }
        if t.a.len() != self.act_dim {
            return Err(Error::dim("transition action", self.act_dim, t.a.len()));
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
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

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Batch> {
        if size == 0 || self.items.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if size > self.items.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot sample {size} transitions from a buffer holding {}",
                self.items.len()
            )));
        }
        let indices: Vec<usize> = (0..size).map(|_| rng.random_range(0..self.items.len())).collect();
        Ok(self.gather(&indices))
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let n = indices.len();
        let mut s = Array2::zeros((n, self.obs_dim));
        let mut s_next = Array2::zeros((n, self.obs_dim));
        let mut a = Array2::zeros((n, self.act_dim));
        let mut r = Vec::with_capacity(n);
        let mut done = Vec::with_capacity(n);
        for (row, &i) in indices.iter().enumerate() {
            let t = &self.items[i];
            s.row_mut(row).assign(&ndarray::ArrayView1::from(&t.s));
            s_next.row_mut(row).assign(&ndarray::ArrayView1::from(&t.s_next));
            a.row_mut(row).assign(&ndarray::ArrayView1::from(&t.a));
            r.push(t.r);
            done.push(t.done);
        }
        Batch { s, a, r, s_next, done, indices: indices.to_vec() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(v: f64) -> Transition {
        Transition {
            s: vec![v, 0.0],
            a: vec![v],
            q_i: None,
            q_o: None,
            r: v,
            s_next: vec![v + 1.0, 0.0],
            done: false,
        }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(3, 2, 1).unwrap();
        for i in 0..5 {
            buf.push(t(i as f64)).unwrap();
        }
        assert_eq!(buf.len(), 3);
        let mut rewards: Vec<f64> = (0..3).map(|i| buf.get(i).unwrap().r).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_respects_size() {
        let mut buf = ReplayBuffer::new(10, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.sample(1, &mut rng), Err(Error::EmptyBatch)));
        for i in 0..4 {
            buf.push(t(i as f64)).unwrap();
        }
        assert!(buf.sample(5, &mut rng).is_err());
        let b = buf.sample(4, &mut rng).unwrap();
        assert_eq!(b.len(), 4);
        for row in 0..4 {
            assert_eq!(b.s[[row, 0]], b.r[row]);
            assert_eq!(b.s_next[[row, 0]], b.r[row] + 1.0);
        }
        let mut bad = t(0.0);
        bad.a = vec![0.0, 1.0];
        assert!(buf.push(bad).is_err());
    }
}
