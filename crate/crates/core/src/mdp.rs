//! Tabular MDPs, Q tables, policies, and the (robust) Bellman operators.
//!
//! Storage is flat and row-major: a kernel entry `P(s'|s,a)` lives at
//! `(s * n_actions + a) * n_states + s'`, a Q or reward entry at
//! `s * n_actions + a`.

use std::fmt;

use crate::covering::NeighborSets;
use crate::error::{Error, Result};

/// Tolerance on simplex sums when validating input.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Sup-norm step change at which fixed-point iteration stops.
pub const FIXED_POINT_TOL: f64 = 1e-10;
/// Fixed-point iteration cap; reaching it is an error.
pub const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        let expected = n_states * n_actions * n_states;
        if probs.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "kernel entries",
                expected,
                got: probs.len(),
            });
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![0.0; n_states * n_actions * n_states],
        }
    }

    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut k = Self::zeros(n_states, n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                for (next, p) in k.row_mut(s, a).iter_mut().enumerate() {
                    *p = f(s, a, next);
                }
            }
        }
        k
    }

    /// Builds a kernel from nested `[s][a][s']` rows.
    pub fn from_rows(rows: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n_states = rows.len();
        if n_states == 0 {
            return Err(Error::EmptyInput("kernel has no states"));
        }
        let n_actions = rows[0].len();
        let mut probs = Vec::with_capacity(n_states * n_actions * n_states);
        for per_state in rows {
            if per_state.len() != n_actions {
                return Err(Error::DimensionMismatch {
                    what: "kernel actions",
                    expected: n_actions,
                    got: per_state.len(),
                });
            }
            for row in per_state {
                if row.len() != n_states {
                    return Err(Error::DimensionMismatch {
                        what: "kernel row length",
                        expected: n_states,
                        got: row.len(),
                    });
                }
                probs.extend_from_slice(row);
            }
        }
        Self::new(n_states, n_actions, probs)
    }

    pub fn to_rows(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_states)
            .map(|s| {
                (0..self.n_actions)
                    .map(|a| self.row(s, a).to_vec())
                    .collect()
            })
            .collect()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.probs[start..start + self.n_states]
    }

    #[inline]
    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &mut self.probs[start..start + self.n_states]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.probs[(s * self.n_actions + a) * self.n_states + next]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    /// `true` when every row is one-hot.
    pub fn is_deterministic(&self) -> bool {
        self.probs
            .chunks(self.n_states)
            .all(|row| row.iter().filter(|&&p| p != 0.0).count() == 1)
    }
}

/// A finite discounted MDP with deterministic rewards in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMDP {
    pub kernel: TransitionKernel,
    /// `reward[s * n_actions + a]`.
    pub reward: Vec<f64>,
    pub gamma: f64,
    pub initial_dist: Vec<f64>,
}

impl TabularMDP {
    /// Assembles and validates an MDP.
    pub fn new(
        kernel: TransitionKernel,
        reward: Vec<f64>,
        gamma: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self {
            kernel,
            reward,
            gamma,
            initial_dist,
        };
        let report = validate_mdp(&mdp);
        if report.is_valid() {
            Ok(mdp)
        } else {
            Err(Error::InvalidMdp(report.to_string()))
        }
    }

    pub fn n_states(&self) -> usize {
        self.kernel.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.kernel.n_actions()
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions() + a]
    }

    /// Copy of this MDP with a different kernel; rewards, discount and
    /// initial distribution are shared bit-exactly.
    pub fn with_kernel(&self, kernel: TransitionKernel) -> Result<Self> {
        if !kernel.same_shape(&self.kernel) {
            return Err(Error::DimensionMismatch {
                what: "kernel states",
                expected: self.n_states(),
                got: kernel.n_states(),
            });
        }
        Ok(Self {
            kernel,
            reward: self.reward.clone(),
            gamma: self.gamma,
            initial_dist: self.initial_dist.clone(),
        })
    }
}

/// One problem found by [`validate_mdp`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    NegativeProbability { s: usize, a: usize, next: usize, value: f64 },
    RowSum { s: usize, a: usize, sum: f64 },
    RewardOutOfRange { s: usize, a: usize, value: f64 },
    InitialDistSum { sum: f64 },
    NegativeInitialMass { s: usize, value: f64 },
    Discount { gamma: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "shape: {msg}"),
            Violation::NegativeProbability { s, a, next, value } => {
                write!(f, "(s={s},a={a}) negative probability {value} at s'={next}")
            }
            Violation::RowSum { s, a, sum } => write!(f, "(s={s},a={a}) row sum {sum}"),
            Violation::RewardOutOfRange { s, a, value } => {
                write!(f, "(s={s},a={a}) reward out of [0,1]: {value}")
            }
            Violation::InitialDistSum { sum } => write!(f, "initial_dist sum {sum}"),
            Violation::NegativeInitialMass { s, value } => {
                write!(f, "initial_dist[{s}] negative: {value}")
            }
            Violation::Discount { gamma } => write!(f, "discount {gamma} outside (0,1)"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Reports every simplex, range and shape violation in `mdp`.
pub fn validate_mdp(mdp: &TabularMDP) -> ValidationReport {
    let mut violations = Vec::new();
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    if mdp.reward.len() != ns * na {
        violations.push(Violation::Shape(format!(
            "reward has {} entries, expected {}",
            mdp.reward.len(),
            ns * na
        )));
    }
    if mdp.initial_dist.len() != ns {
        violations.push(Violation::Shape(format!(
            "initial_dist has {} entries, expected {ns}",
            mdp.initial_dist.len()
        )));
    }
    if !(mdp.gamma > 0.0 && mdp.gamma < 1.0) {
        violations.push(Violation::Discount { gamma: mdp.gamma });
    }
    for s in 0..ns {
        for a in 0..na {
            let row = mdp.kernel.row(s, a);
            for (next, &p) in row.iter().enumerate() {
                if p < 0.0 || !p.is_finite() {
                    violations.push(Violation::NegativeProbability { s, a, next, value: p });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                violations.push(Violation::RowSum { s, a, sum });
            }
            if let Some(&r) = mdp.reward.get(s * na + a) {
                if !(0.0..=1.0).contains(&r) {
                    violations.push(Violation::RewardOutOfRange { s, a, value: r });
                }
            }
        }
    }
    if mdp.initial_dist.len() == ns {
        for (s, &p) in mdp.initial_dist.iter().enumerate() {
            if p < 0.0 || !p.is_finite() {
                violations.push(Violation::NegativeInitialMass { s, value: p });
            }
        }
        let sum: f64 = mdp.initial_dist.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            violations.push(Violation::InitialDistSum { sum });
        }
    }
    ValidationReport { violations }
}

/// A real-valued function over states x actions.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::constant(n_states, n_actions, 0.0)
    }

    pub fn constant(n_states: usize, n_actions: usize, c: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![c; n_states * n_actions],
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                what: "Q table entries",
                expected: n_states * n_actions,
                got: values.len(),
            });
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let values = (0..n_states)
            .flat_map(|s| (0..n_actions).map(move |a| (s, a)))
            .map(|(s, a)| f(s, a))
            .collect();
        Self {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_states * n_actions);
        for row in rows {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch {
                    what: "Q table row length",
                    expected: n_actions,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_vec(n_states, n_actions, values)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.n_actions.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `max_a Q(s, a)` for every state.
    pub fn state_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_states);
        self.state_values_into(&mut out);
        out
    }

    pub(crate) fn state_values_into(&self, out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.values
                .chunks(self.n_actions)
                .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        );
    }

    /// `‖self − other‖_∞`. Panics on shape mismatch.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        assert!(self.same_shape(other), "Q table shape mismatch");
        sup_distance(&self.values, &other.values)
    }

    pub fn same_shape(&self, other: &QTable) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn sup_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// A stochastic policy; deterministic policies have one-hot rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let n_states = actions.len();
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch {
                    what: "policy row length",
                    expected: n_actions,
                    got: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOL || row.iter().any(|&p| p < 0.0) {
                return Err(Error::param("policy row sum", sum, format!("row {s} is not a simplex vector")));
            }
            probs.extend_from_slice(row);
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// The chosen action per state, if every row is one-hot.
    pub fn actions(&self) -> Option<Vec<usize>> {
        (0..self.n_states)
            .map(|s| {
                let row = self.row(s);
                let mut hits = row.iter().enumerate().filter(|(_, &p)| p != 0.0);
                match (hits.next(), hits.next()) {
                    (Some((a, &p)), None) if p == 1.0 => Some(a),
                    _ => None,
                }
            })
            .collect()
    }
}

fn check_q_shape(mdp: &TabularMDP, q: &QTable) -> Result<()> {
    if q.n_states() != mdp.n_states() {
        return Err(Error::DimensionMismatch {
            what: "Q table states",
            expected: mdp.n_states(),
            got: q.n_states(),
        });
    }
    if q.n_actions() != mdp.n_actions() {
        return Err(Error::DimensionMismatch {
            what: "Q table actions",
            expected: mdp.n_actions(),
            got: q.n_actions(),
        });
    }
    Ok(())
}

pub(crate) fn check_omega(omega: f64) -> Result<()> {
    if !(0.0..1.0).contains(&omega) {
        return Err(Error::param("omega", omega, "must lie in [0, 1)"));
    }
    Ok(())
}

/// `min_{s' ∈ neighbors[s]} values[s']` per state.
pub(crate) fn neighbor_minima(values: &[f64], neighbors: &NeighborSets, out: &mut Vec<f64>) -> Result<()> {
    out.clear();
    for (s, set) in neighbors.iter().enumerate() {
        if set.is_empty() {
            return Err(Error::EmptyNeighborSet { state: s });
        }
        out.push(set.iter().map(|&n| values[n]).fold(f64::INFINITY, f64::min));
    }
    Ok(())
}

/// Standard optimality backup `r + γ Σ P(s'|s,a) max_a' Q(s',a')`.
pub fn bellman_optimality_apply(mdp: &TabularMDP, q: &QTable) -> Result<QTable> {
    check_q_shape(mdp, q)?;
    let v = q.state_values();
    let gamma = mdp.gamma;
    Ok(QTable::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        mdp.reward(s, a) + gamma * dot(mdp.kernel.row(s, a), &v)
    }))
}

/// Robust backup for one environment: the expectation term is weighted by
/// `1 − ω` and the worst neighbor's value by `ω`.
pub fn robust_bellman_apply(
    mdp: &TabularMDP,
    q: &QTable,
    omega: f64,
    neighbors: &NeighborSets,
) -> Result<QTable> {
    check_q_shape(mdp, q)?;
    check_omega(omega)?;
    neighbors.check_len(mdp.n_states())?;
    let v = q.state_values();
    let mut worst = Vec::new();
    neighbor_minima(&v, neighbors, &mut worst)?;
    let gamma = mdp.gamma;
    Ok(QTable::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        robust_target(
            mdp.reward(s, a),
            gamma,
            omega,
            dot(mdp.kernel.row(s, a), &v),
            worst[s],
        )
    }))
}

/// `r + γ((1 − ω)·expected + ω·worst)`.
///
/// With `ω = 0` this is bitwise equal to `r + γ·expected`.
#[inline]
pub(crate) fn robust_target(r: f64, gamma: f64, omega: f64, expected: f64, worst: f64) -> f64 {
    r + gamma * ((1.0 - omega) * expected + omega * worst)
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Deterministic greedy policy; ties go to the lowest action index.
pub fn greedy_policy(q: &QTable) -> Policy {
    let actions: Vec<usize> = (0..q.n_states()).map(|s| argmax(q.row(s))).collect();
    Policy::deterministic(q.n_actions(), &actions)
}

/// Index of the first maximal entry.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn check_policy_shape(mdp: &TabularMDP, pi: &Policy) -> Result<()> {
    if pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions() {
        return Err(Error::DimensionMismatch {
            what: "policy states x actions",
            expected: mdp.n_states() * mdp.n_actions(),
            got: pi.n_states() * pi.n_actions(),
        });
    }
    Ok(())
}

/// Iterates `update(current, next)` until the sup-norm change drops below
/// `tol`. Returns the iterate, the iteration count and the final change.
pub(crate) fn fixed_point(
    mut current: Vec<f64>,
    tol: f64,
    mut update: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
) -> Result<(Vec<f64>, usize, f64)> {
    let mut next = current.clone();
    let mut change = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        update(&current, &mut next)?;
        change = sup_distance(&current, &next);
        std::mem::swap(&mut current, &mut next);
        if change < tol {
            return Ok((current, it, change));
        }
    }
    Err(Error::IterationCap {
        iterations: MAX_ITERATIONS,
        last_change: change,
    })
}

/// Step-change threshold that keeps a `γ`-contraction within
/// [`FIXED_POINT_TOL`] of its fixed point.
fn certified_tol(gamma: f64) -> f64 {
    FIXED_POINT_TOL * (1.0 - gamma) / gamma
}

/// State values of `pi` under `mdp`, within [`FIXED_POINT_TOL`] in sup norm.
pub fn policy_state_values(mdp: &TabularMDP, pi: &Policy) -> Result<Vec<f64>> {
    check_policy_shape(mdp, pi)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let gamma = mdp.gamma;
    let (v, _, _) = fixed_point(vec![0.0; ns], certified_tol(gamma), |v, out| {
        for (s, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for a in 0..na {
                let p = pi.prob(s, a);
                if p != 0.0 {
                    acc += p * (mdp.reward(s, a) + gamma * dot(mdp.kernel.row(s, a), v));
                }
            }
            *o = acc;
        }
        Ok(())
    })?;
    Ok(v)
}

/// Expected discounted return of `pi` from the initial distribution.
pub fn evaluate_policy_exact(mdp: &TabularMDP, pi: &Policy) -> Result<f64> {
    let v = policy_state_values(mdp, pi)?;
    Ok(dot(&mdp.initial_dist, &v))
}

/// Worst-case state values of `pi` over the covering set centred at
/// `kernel` with radius `omega` and neighbor sets `neighbors`.
///
/// The inner infimum over the rectangular set puts all of the `ω` mass on
/// the lowest-valued neighbor, so the fixed point is computed directly.
pub fn robust_policy_evaluation(
    kernel: &TransitionKernel,
    reward: &[f64],
    pi: &Policy,
    omega: f64,
    neighbors: &NeighborSets,
    gamma: f64,
) -> Result<Vec<f64>> {
    check_omega(omega)?;
    let (ns, na) = (kernel.n_states(), kernel.n_actions());
    neighbors.check_len(ns)?;
    if pi.n_states() != ns || pi.n_actions() != na {
        return Err(Error::DimensionMismatch {
            what: "policy states x actions",
            expected: ns * na,
            got: pi.n_states() * pi.n_actions(),
        });
    }
    if reward.len() != ns * na {
        return Err(Error::DimensionMismatch {
            what: "reward entries",
            expected: ns * na,
            got: reward.len(),
        });
    }
    let mut worst = Vec::with_capacity(ns);
    let (v, _, _) = fixed_point(vec![0.0; ns], certified_tol(gamma), |v, out| {
        neighbor_minima(v, neighbors, &mut worst)?;
        for (s, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for a in 0..na {
                let p = pi.prob(s, a);
                if p != 0.0 {
                    let expected = dot(kernel.row(s, a), v);
                    acc += p * robust_target(reward[s * na + a], gamma, omega, expected, worst[s]);
                }
            }
            *o = acc;
        }
        Ok(())
    })?;
    Ok(v)
}
