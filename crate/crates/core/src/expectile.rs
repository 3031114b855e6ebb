//! Expectile regression of the degree function
//! `D(s) = min_{s' ∈ N^s} max_a' Q(s', a')`.
//!
//! The degree function is parameterised by one scalar per state. Fitting it
//! with a low expectile level pulls each scalar toward the lower tail of
//! the sampled targets `max_a' Q(s', a')`, approximating the minimum
//! without enumerating the neighbor set.

use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::covering::NeighborSets;
use crate::error::{Error, Result};
use crate::mdp::{neighbor_minima, QTable};
use crate::rng::{stream, Stream};

pub const DEFAULT_TAU: f64 = 0.01;
pub const DEFAULT_LR: f64 = 0.05;
pub const DEFAULT_STEPS: usize = 10_000;

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 0.5) {
        return Err(Error::param("tau", tau, "expectile level must lie in (0, 0.5)"));
    }
    Ok(())
}

/// `τ(y − x)²` if `y ≥ x`, else `(1 − τ)(y − x)²`.
pub fn expectile_loss(y: f64, x: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(loss_unchecked(y, x, tau))
}

/// Derivative of [`expectile_loss`] with respect to `x`.
pub fn expectile_grad(y: f64, x: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(grad_unchecked(y, x, tau))
}

#[inline]
fn loss_unchecked(y: f64, x: f64, tau: f64) -> f64 {
    let u = y - x;
    let w = if u >= 0.0 { tau } else { 1.0 - tau };
    w * u * u
}

#[inline]
fn grad_unchecked(y: f64, x: f64, tau: f64) -> f64 {
    let u = y - x;
    let w = if u >= 0.0 { tau } else { 1.0 - tau };
    -2.0 * w * u
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub next: usize,
}

/// Bounded FIFO of transitions; the oldest entry is evicted when full.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
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

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}

/// One degree estimate per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeTable {
    pub d: Vec<f64>,
}

impl DegreeTable {
    pub fn zeros(n_states: usize) -> Self {
        Self { d: vec![0.0; n_states] }
    }

    pub fn get(&self, s: usize) -> f64 {
        self.d[s]
    }

    /// One descent step of the expectile loss at state `s`.
    #[inline]
    pub fn sgd_step(&mut self, s: usize, target: f64, tau: f64, lr: f64) {
        self.d[s] -= lr * grad_unchecked(target, self.d[s], tau);
    }
}

/// Exact `min_{s' ∈ N^s} max_a' Q(s', a')` per state.
pub fn exact_degree(q: &QTable, neighbors: &NeighborSets) -> Result<DegreeTable> {
    neighbors.check_len(q.n_states())?;
    let mut d = Vec::with_capacity(q.n_states());
    neighbor_minima(&q.state_values(), neighbors, &mut d)?;
    Ok(DegreeTable { d })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeFit {
    pub table: DegreeTable,
    /// States that never appear as the source of a buffered transition;
    /// their estimate stays at zero.
    pub undersampled: Vec<usize>,
}

/// Fits the degree table by stochastic gradient descent on the expectile
/// loss.
///
/// Each of the `steps` iterations visits every state that has buffered
/// transitions, draws one of them uniformly, and moves `d(s)` against the
/// loss gradient with target `max_a' Q(s', a')`. `tau = 0.5` is accepted
/// as a diagnostic (the fit then tracks the sample mean).
pub fn fit_degree(buffer: &ReplayBuffer, q: &QTable, tau: f64, lr: f64, steps: usize, seed: u64) -> Result<DegreeFit> {
    if !(tau > 0.0 && tau <= 0.5) {
        return Err(Error::param("tau", tau, "must lie in (0, 0.5]"));
    }
    if !(lr > 0.0) {
        return Err(Error::param("lr", lr, "must be positive"));
    }
    if buffer.is_empty() {
        return Err(Error::EmptyInput("replay buffer"));
    }
    let ns = q.n_states();
    let values = q.state_values();
    let mut by_state: Vec<Vec<f64>> = vec![Vec::new(); ns];
    for t in buffer.iter() {
        if t.s >= ns || t.next >= ns {
            return Err(Error::DimensionMismatch {
                what: "transition state index",
                expected: ns,
                got: t.s.max(t.next),
            });
        }
        by_state[t.s].push(values[t.next]);
    }
    let mut rng = stream(seed, Stream::Fit);
    let mut table = DegreeTable::zeros(ns);
    for _ in 0..steps {
        for (s, targets) in by_state.iter().enumerate() {
            if targets.is_empty() {
                continue;
            }
            let y = targets[rng.random_range(0..targets.len())];
            table.sgd_step(s, y, tau, lr);
        }
    }
    let undersampled = (0..ns).filter(|&s| by_state[s].is_empty()).collect();
    Ok(DegreeFit { table, undersampled })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_values() {
        assert!((expectile_loss(2.0, 1.0, 0.01).unwrap() - 0.01).abs() < 1e-15);
        assert!((expectile_loss(0.0, 1.0, 0.01).unwrap() - 0.99).abs() < 1e-15);
        assert_eq!(expectile_loss(3.0, 3.0, 0.2).unwrap(), 0.0);
        assert!(expectile_loss(1.0, 0.0, 0.5).is_err());
        assert!(expectile_loss(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn grad_values() {
        assert_eq!(expectile_grad(1.0, 1.0, 0.01).unwrap(), 0.0);
        assert!((expectile_grad(2.0, 1.0, 0.01).unwrap() + 0.02).abs() < 1e-15);
        assert!(expectile_grad(2.0, 1.0, 0.7).is_err());
    }

    #[test]
    fn buffer_is_fifo() {
        let mut b = ReplayBuffer::new(2);
        for s in 0..3 {
            b.push(Transition { s, a: 0, r: 0.0, next: 0 });
        }
        assert_eq!(b.len(), 2);
        assert_eq!(b.get(0).unwrap().s, 1);
    }

    #[test]
    fn exact_degree_cases() {
        let q = QTable::constant(3, 2, 1.5);
        let n = NeighborSets::from_sets(vec![vec![0, 1], vec![2], vec![0, 1, 2]]);
        assert_eq!(exact_degree(&q, &n).unwrap().d, vec![1.5; 3]);
        let q = QTable::from_rows(&[vec![0.0, 4.0], vec![1.0, 2.0], vec![3.0, 0.5]]).unwrap();
        let singletons = NeighborSets::from_sets(vec![vec![0], vec![1], vec![2]]);
        assert_eq!(exact_degree(&q, &singletons).unwrap().d, vec![4.0, 2.0, 3.0]);
        let empty = NeighborSets::from_sets(vec![vec![0], vec![], vec![2]]);
        assert!(matches!(exact_degree(&q, &empty), Err(Error::EmptyNeighborSet { state: 1 })));
    }

    #[test]
    fn single_target_regression() {
        let q = QTable::from_rows(&[vec![0.0, 0.0], vec![2.5, 1.0]]).unwrap();
        let mut b = ReplayBuffer::new(100);
        for _ in 0..10 {
            b.push(Transition { s: 0, a: 1, r: 0.0, next: 1 });
        }
        let fit = fit_degree(&b, &q, 0.01, 0.05, 10_000, 0).unwrap();
        assert!((fit.table.get(0) - 2.5).abs() < 1e-3);
        assert_eq!(fit.undersampled, vec![1]);
    }

    #[test]
    fn symmetric_level_tracks_mean() {
        let q = QTable::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let mut b = ReplayBuffer::new(100);
        for i in 0..40 {
            b.push(Transition { s: 0, a: 0, r: 0.0, next: 1 + i % 2 });
        }
        let fit = fit_degree(&b, &q, 0.5, 0.01, 20_000, 5).unwrap();
        assert!((fit.table.get(0) - 2.0).abs() < 0.1, "{}", fit.table.get(0));
    }
}
