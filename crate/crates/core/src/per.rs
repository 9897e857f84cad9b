//! Prioritized experience replay.
//!
//! Transition `k` is drawn with probability `p_k / Σ p_j` where
//! `p = (d + ε)^α` and `d` is its latest absolute TD difference. New
//! transitions enter with the largest stored priority so each is replayed
//! at least as eagerly as anything already in memory.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::ActionMask;
use crate::codec::StateVector;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: StateVector,
    pub a: usize,
    pub r: f64,
    pub s_next: StateVector,
    pub done: bool,
    /// Actions permitted in `s_next`.
    pub next_mask: ActionMask,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerConfig {
    pub capacity: usize,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for PerConfig {
    fn default() -> Self {
        PerConfig { capacity: 2000, alpha: 0.6, eps: 0.01 }
    }
}

impl PerConfig {
    pub fn compute_priority(&self, d: f64) -> f64 {
        compute_priority(d, self.alpha, self.eps)
    }
}

pub fn compute_priority(d: f64, alpha: f64, eps: f64) -> f64 {
    (d.abs() + eps).powf(alpha)
}

#[derive(Clone, Debug)]
pub struct PrioritizedMemory {
    config: PerConfig,
    items: Vec<Transition>,
    priorities: Vec<f64>,
    /// Slot the next push overwrites once full.
    head: usize,
}

impl PrioritizedMemory {
    pub fn new(config: PerConfig) -> Result<Self> {
        if config.capacity == 0 {
            return Err(Error::Config("per.capacity must be at least 1".into()));
        }
        if !(config.alpha >= 0.0) || !(config.eps > 0.0) {
            return Err(Error::Config("per.alpha must be >= 0 and per.eps > 0".into()));
        }
        Ok(PrioritizedMemory {
            config,
            items: Vec::with_capacity(config.capacity),
            priorities: Vec::with_capacity(config.capacity),
            head: 0,
        })
    }

    pub fn config(&self) -> &PerConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    pub fn priority(&self, index: usize) -> Option<f64> {
        self.priorities.get(index).copied()
    }

    pub fn priorities(&self) -> &[f64] {
        &self.priorities
    }

    pub fn max_priority(&self) -> f64 {
        self.priorities.iter().copied().fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p)))).unwrap_or(1.0)
    }

    /// Stores a transition; at capacity the oldest one is evicted.
    /// Returns the slot used.
    pub fn push(&mut self, t: Transition) -> usize {
        let p = self.max_priority();
        if self.items.len() < self.config.capacity {
            self.items.push(t);
            self.priorities.push(p);
            self.items.len() - 1
        } else {
            let slot = self.head;
            self.items[slot] = t;
            self.priorities[slot] = p;
            self.head = (self.head + 1) % self.config.capacity;
            slot
        }
    }

    /// Slots in insertion order, oldest first.
    pub fn oldest_first(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.items.len();
        let start = if n < self.config.capacity { 0 } else { self.head };
        (0..n).map(move |i| (start + i) % n)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.priorities.iter().sum();
        self.priorities.iter().map(|p| p / total).collect()
    }

    /// Draws `batch` slots with replacement, each with probability
    /// proportional to its priority.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.is_empty() {
            return Err(Error::EmptyMemory);
        }
        let mut cumulative = Vec::with_capacity(self.priorities.len());
        let mut acc = 0.0;
        for p in &self.priorities {
            acc += p;
            cumulative.push(acc);
        }
        let last = self.priorities.len() - 1;
        Ok((0..batch)
            .map(|_| {
                let u = rng.gen::<f64>() * acc;
                cumulative.partition_point(|&c| c <= u).min(last)
            })
            .collect())
    }

    pub fn update_priorities(&mut self, indices: &[usize], d: &[f64]) -> Result<()> {
        if indices.len() != d.len() {
            return Err(Error::Dimension { expected: indices.len(), got: d.len() });
        }
        for (&i, &d) in indices.iter().zip(d) {
            if i >= self.priorities.len() {
                return Err(Error::Dimension { expected: self.priorities.len(), got: i + 1 });
            }
            self.priorities[i] = self.config.compute_priority(d);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::GridSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(r: f64) -> Transition {
        let s = StateVector::zeros(&GridSpec::STANDARD);
        Transition { s: s.clone(), a: 0, r, s_next: s, done: false, next_mask: ActionMask::all() }
    }

    fn memory(capacity: usize) -> PrioritizedMemory {
        PrioritizedMemory::new(PerConfig { capacity, ..PerConfig::default() }).unwrap()
    }

    #[test]
    fn priority_formula() {
        assert_eq!(compute_priority(3.7, 0.0, 0.01), 1.0);
        assert!((compute_priority(0.0, 0.6, 0.01) - 0.01f64.powf(0.6)).abs() < 1e-15);
        assert!(compute_priority(0.0, 0.6, 0.01) > 0.0);
        assert!((compute_priority(0.99, 1.0, 0.01) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn push_seeds_with_max_priority() {
        let mut m = memory(10);
        m.push(tr(0.0));
        assert_eq!(m.len(), 1);
        assert_eq!(m.priority(0), Some(1.0));
        m.update_priorities(&[0], &[5.0]).unwrap();
        m.push(tr(1.0));
        m.push(tr(2.0));
        m.update_priorities(&[2], &[0.0]).unwrap();
        let idx = m.push(tr(3.0));
        let p = m.probabilities();
        assert!(p.iter().all(|&q| q <= p[idx] + 1e-15));
    }

    #[test]
    fn ring_evicts_oldest() {
        let mut m = memory(2000);
        for i in 0..2001 {
            m.push(tr(i as f64));
        }
        assert_eq!(m.len(), 2000);
        assert!((0..2000).all(|i| m.get(i).unwrap().r != 0.0));
        let order: Vec<f64> = m.oldest_first().map(|i| m.get(i).unwrap().r).collect();
        assert_eq!(order.first(), Some(&1.0));
        assert_eq!(order.last(), Some(&2000.0));
    }

    #[test]
    fn probabilities_normalize() {
        let mut m = PrioritizedMemory::new(PerConfig { capacity: 4, alpha: 1.0, eps: 0.01 }).unwrap();
        m.push(tr(0.0));
        m.push(tr(0.0));
        m.update_priorities(&[0, 1], &[0.99, 2.99]).unwrap();
        let p = m.probabilities();
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn sampling_edge_cases() {
        let m = memory(4);
        assert!(matches!(m.sample(1, &mut ChaCha8Rng::seed_from_u64(0)), Err(Error::EmptyMemory)));
        let mut m = memory(4);
        m.push(tr(0.0));
        assert!(m.sample(100, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().iter().all(|&i| i == 0));
    }

    #[test]
    fn raised_priority_is_drawn_more() {
        let mut m = memory(8);
        for _ in 0..4 {
            m.push(tr(0.0));
        }
        m.update_priorities(&[0, 1, 2, 3], &[0.0, 0.0, 0.0, 0.0]).unwrap();
        let before = m.priority(1).unwrap();
        m.update_priorities(&[2], &[10.0]).unwrap();
        assert_eq!(m.priority(1), Some(before));
        let draws = m.sample(10_000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let hits = draws.iter().filter(|&&i| i == 2).count();
        assert!(hits > 9_000);
    }
}
