//! Federated training: `K` agents run local (robust) Q-learning updates and
//! a server replaces every local table by the average every `E` steps.
//!
//! Time indexing: the local step taken at time `t` (starting from 0) uses
//! the learning rate `λ_t` and produces `Q^k_{t+1}`. When `t + 1` is a
//! multiple of `E` the server averages and broadcasts, so the tables
//! recorded at `t + 1` are already synchronized. The step counter never
//! resets.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::covering::{check_assumption1, compute_neighbors, NeighborSets};
use crate::envgen::EnvFamily;
use crate::error::{Error, Result};
use crate::expectile::{DegreeTable, ReplayBuffer, Transition, DEFAULT_LR, DEFAULT_TAU};
use crate::mdp::{argmax, check_omega, neighbor_minima, robust_target, sup_distance, QTable, TabularMDP};
use crate::oracle::theorem1_bound;
use crate::rng::{stream, Rng, Stream};

/// Smallest discount for which the theorem learning-rate schedule is used.
pub const THEOREM_MIN_GAMMA: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Qavg,
    Fedrq,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Qavg => "qavg",
            Algorithm::Fedrq => "fedrq",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full-table updates with the exact expectation under `P_k`.
    #[default]
    Expected,
    /// One sampled transition per agent and step.
    Sampled,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    /// `λ_t = 2 / ((1 − γ)(t + E))`.
    #[default]
    Theorem,
    Constant(f64),
}

/// Source of the worst-neighbor term in sampled mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinTerm {
    /// Exact minimum over the agent's known neighbor sets.
    Exact,
    /// Online expectile estimate of the degree function.
    Expectile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampledConfig {
    pub epsilon: f64,
    pub horizon: usize,
    pub min_term: MinTerm,
    pub tau: f64,
    pub degree_lr: f64,
    pub degree_updates_per_step: usize,
    pub buffer_capacity: usize,
}

impl Default for SampledConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            horizon: 200,
            min_term: MinTerm::Exact,
            tau: DEFAULT_TAU,
            degree_lr: DEFAULT_LR,
            degree_updates_per_step: 1,
            buffer_capacity: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationConfig {
    pub sync_interval: usize,
    pub total_steps: usize,
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub omega: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    pub sampled: SampledConfig,
    /// Record every n-th step (step 0 and the final step are always kept).
    pub record_every: usize,
    /// Keep a copy of the global table after every aggregation.
    pub keep_snapshots: bool,
}

impl FederationConfig {
    /// Expected-mode configuration with the theorem schedule.
    pub fn theorem(algorithm: Algorithm, omega: f64, sync_interval: usize, total_steps: usize) -> Self {
        Self {
            sync_interval,
            total_steps,
            algorithm,
            mode: Mode::Expected,
            omega,
            lr_schedule: LrSchedule::Theorem,
            seed: 0,
            sampled: SampledConfig::default(),
            record_every: 1,
            keep_snapshots: false,
        }
    }

    /// Expected mode with the theorem schedule: the regime the convergence
    /// bound covers.
    pub fn is_theorem_mode(&self) -> bool {
        self.mode == Mode::Expected && self.lr_schedule == LrSchedule::Theorem
    }

    pub fn validate(&self, gamma: f64) -> Result<()> {
        if self.sync_interval <= 1 {
            return Err(Error::config(
                "federation.sync_interval",
                format!("the convergence guarantee requires E > 1, got {}", self.sync_interval),
            ));
        }
        if !(0.0..1.0).contains(&self.omega) {
            return Err(Error::config("federation.omega", format!("{} is outside [0, 1)", self.omega)));
        }
        if self.record_every == 0 {
            return Err(Error::config("federation.record_every", "must be at least 1"));
        }
        match self.lr_schedule {
            LrSchedule::Theorem => {
                if !(THEOREM_MIN_GAMMA..1.0).contains(&gamma) {
                    return Err(Error::config(
                        "environment.gamma",
                        format!("theorem schedule requires gamma in [0.2, 1), got {gamma}"),
                    ));
                }
            }
            LrSchedule::Constant(l) => {
                if !(l > 0.0 && l <= 1.0) {
                    return Err(Error::config("federation.schedule", format!("constant rate {l} outside (0, 1]")));
                }
            }
        }
        if self.mode == Mode::Sampled {
            let s = &self.sampled;
            if !(0.0..=1.0).contains(&s.epsilon) {
                return Err(Error::config("federation.epsilon", format!("{} outside [0, 1]", s.epsilon)));
            }
            if s.horizon == 0 || s.buffer_capacity == 0 {
                return Err(Error::config("federation.horizon", "horizon and buffer capacity must be positive"));
            }
            if s.min_term == MinTerm::Expectile && !(s.tau > 0.0 && s.tau < 0.5) {
                return Err(Error::config("federation.tau", format!("{} outside (0, 0.5)", s.tau)));
            }
        }
        Ok(())
    }

    pub fn learning_rate(&self, t: usize, gamma: f64) -> Result<f64> {
        match self.lr_schedule {
            LrSchedule::Theorem => lr_schedule(t, gamma, self.sync_interval),
            LrSchedule::Constant(l) => Ok(l),
        }
    }
}

/// `λ_t = 2 / ((1 − γ)(t + E))`.
pub fn lr_schedule(t: usize, gamma: f64, sync_interval: usize) -> Result<f64> {
    if !(THEOREM_MIN_GAMMA..1.0).contains(&gamma) {
        return Err(Error::param("gamma", gamma, "theorem schedule requires gamma in [0.2, 1)"));
    }
    if sync_interval <= 1 {
        return Err(Error::param("sync_interval", sync_interval as f64, "theorem schedule requires E > 1"));
    }
    Ok(2.0 / ((1.0 - gamma) * (t + sync_interval) as f64))
}

/// Row-compressed kernel used by the simulator.
#[derive(Debug, Clone)]
struct SparseKernel {
    offsets: Vec<usize>,
    next: Vec<usize>,
    prob: Vec<f64>,
}

impl SparseKernel {
    fn new(mdp: &TabularMDP) -> Self {
        let mut offsets = vec![0];
        let mut next = Vec::new();
        let mut prob = Vec::new();
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                for (n, &p) in mdp.kernel.row(s, a).iter().enumerate() {
                    if p != 0.0 {
                        next.push(n);
                        prob.push(p);
                    }
                }
                offsets.push(next.len());
            }
        }
        Self { offsets, next, prob }
    }

    #[inline]
    fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        (&self.next[lo..hi], &self.prob[lo..hi])
    }

    #[inline]
    fn expect(&self, i: usize, v: &[f64]) -> f64 {
        let (next, prob) = self.row(i);
        next.iter().zip(prob).map(|(&n, &p)| p * v[n]).sum()
    }

    fn sample(&self, i: usize, u: f64) -> usize {
        let (next, prob) = self.row(i);
        let mut acc = 0.0;
        for (&n, &p) in next.iter().zip(prob) {
            acc += p;
            if u < acc {
                return n;
            }
        }
        *next.last().expect("kernel row has no support")
    }
}

/// One federated agent: its environment, local table and, in sampled mode,
/// its interaction state.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub index: usize,
    pub q: QTable,
    pub env: TabularMDP,
    /// `N^s_k`, computed from this agent's own kernel.
    pub neighbors: NeighborSets,
    pub current_state: usize,
    pub episode_step: usize,
    pub replay: ReplayBuffer,
    pub degree: DegreeTable,
    pub sampled: SampledConfig,
    sparse: SparseKernel,
    absorbing: Vec<bool>,
    rng: Rng,
    degree_rng: Rng,
    scratch_v: Vec<f64>,
    scratch_w: Vec<f64>,
}

impl AgentState {
    pub fn new(index: usize, env: TabularMDP, seed: u64, sampled: SampledConfig) -> Self {
        let (ns, na) = (env.n_states(), env.n_actions());
        let neighbors = compute_neighbors(&env.kernel);
        let absorbing = (0..ns)
            .map(|s| (0..na).all(|a| env.kernel.prob(s, a, s) == 1.0))
            .collect();
        let mut rng = stream(seed, Stream::Agent(index));
        let current_state = sample_initial(&env.initial_dist, rng.random());
        Self {
            index,
            q: QTable::zeros(ns, na),
            sparse: SparseKernel::new(&env),
            neighbors,
            current_state,
            episode_step: 0,
            replay: ReplayBuffer::new(sampled.buffer_capacity),
            degree: DegreeTable::zeros(ns),
            sampled,
            absorbing,
            rng,
            degree_rng: stream(seed, Stream::Degree(index)),
            env,
            scratch_v: Vec::with_capacity(ns),
            scratch_w: Vec::with_capacity(ns),
        }
    }
}

fn sample_initial(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (s, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return s;
        }
    }
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Local update of QAvg: `Q ← (1 − λ)Q + λ[r + γ Σ P_k max Q]` in expected
/// mode, or the same update at one visited pair in sampled mode.
pub fn local_step_qavg(agent: &mut AgentState, lambda: f64, mode: Mode) -> Result<()> {
    match mode {
        Mode::Expected => {
            agent.q.state_values_into(&mut agent.scratch_v);
            let gamma = agent.env.gamma;
            for (i, q) in agent.q.values_mut().iter_mut().enumerate() {
                let expected = agent.sparse.expect(i, &agent.scratch_v);
                let target = agent.env.reward[i] + gamma * expected;
                *q = (1.0 - lambda) * *q + lambda * target;
            }
            Ok(())
        }
        Mode::Sampled => sampled_step(agent, lambda, None),
    }
}

/// Robust local update of FedRQ: the expectation is weighted by `1 − ω`
/// and the worst neighbor's value `min_{s' ∈ N^s_k} max_a' Q(s', a')` by
/// `ω`.
pub fn local_step_fedrq(agent: &mut AgentState, lambda: f64, omega: f64, mode: Mode) -> Result<()> {
    check_omega(omega)?;
    match mode {
        Mode::Expected => {
            agent.q.state_values_into(&mut agent.scratch_v);
            neighbor_minima(&agent.scratch_v, &agent.neighbors, &mut agent.scratch_w)?;
            let gamma = agent.env.gamma;
            let na = agent.env.n_actions();
            for (i, q) in agent.q.values_mut().iter_mut().enumerate() {
                let expected = agent.sparse.expect(i, &agent.scratch_v);
                let target = robust_target(agent.env.reward[i], gamma, omega, expected, agent.scratch_w[i / na]);
                *q = (1.0 - lambda) * *q + lambda * target;
            }
            Ok(())
        }
        Mode::Sampled => sampled_step(agent, lambda, Some(omega)),
    }
}

/// One ε-greedy interaction step. `omega = None` is the plain Q-learning
/// target.
fn sampled_step(agent: &mut AgentState, lambda: f64, omega: Option<f64>) -> Result<()> {
    let na = agent.env.n_actions();
    let s = agent.current_state;
    let explore = agent.rng.random::<f64>() < agent.sampled.epsilon;
    let a = if explore {
        agent.rng.random_range(0..na)
    } else {
        greedy_action(agent.q.row(s), &mut agent.rng)
    };
    let i = s * na + a;
    let next = agent.sparse.sample(i, agent.rng.random());
    let r = agent.env.reward[i];
    let gamma = agent.env.gamma;
    let next_value = row_max(agent.q.row(next));
    let target = match omega {
        None => r + gamma * next_value,
        Some(omega) => {
            let worst = match agent.sampled.min_term {
                MinTerm::Exact => {
                    let set = agent.neighbors.get(s);
                    if set.is_empty() {
                        return Err(Error::EmptyNeighborSet { state: s });
                    }
                    set.iter().map(|&n| row_max(agent.q.row(n))).fold(f64::INFINITY, f64::min)
                }
                MinTerm::Expectile => agent.degree.get(s),
            };
            robust_target(r, gamma, omega, next_value, worst)
        }
    };
    let old = agent.q.get(s, a);
    agent.q.set(s, a, (1.0 - lambda) * old + lambda * target);
    agent.replay.push(Transition { s, a, r, next });
    if omega.is_some() && agent.sampled.min_term == MinTerm::Expectile {
        let cfg = agent.sampled;
        for _ in 0..cfg.degree_updates_per_step {
            let j = agent.degree_rng.random_range(0..agent.replay.len());
            let t = *agent.replay.get(j).expect("index within buffer");
            let y = row_max(agent.q.row(t.next));
            agent.degree.sgd_step(t.s, y, cfg.tau, cfg.degree_lr);
        }
    }
    agent.episode_step += 1;
    // Acting once inside an absorbing state updates its value before the reset.
    if agent.absorbing[s] || agent.episode_step >= agent.sampled.horizon {
        agent.current_state = sample_initial(&agent.env.initial_dist, agent.rng.random());
        agent.episode_step = 0;
    } else {
        agent.current_state = next;
    }
    Ok(())
}

/// Greedy action with ties broken uniformly at random.
fn greedy_action(row: &[f64], rng: &mut Rng) -> usize {
    let best = row_max(row);
    let ties = row.iter().filter(|&&q| q == best).count();
    if ties == 1 {
        return argmax(row);
    }
    let pick = rng.random_range(0..ties);
    row.iter()
        .enumerate()
        .filter(|&(_, &q)| q == best)
        .nth(pick)
        .map_or(0, |(a, _)| a)
}

#[inline]
fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Entrywise mean, accumulated in list order.
pub fn aggregate(q_tables: &[QTable]) -> Result<QTable> {
    let first = q_tables.first().ok_or(Error::EmptyInput("no Q tables to aggregate"))?;
    // Mean of deviations from the first table, so identical tables
    // average to themselves exactly.
    let mut dev = QTable::zeros(first.n_states(), first.n_actions());
    for q in &q_tables[1..] {
        if !q.same_shape(first) {
            return Err(Error::DimensionMismatch {
                what: "Q table entries",
                expected: first.values().len(),
                got: q.values().len(),
            });
        }
        for ((acc, &x), &x0) in dev.values_mut().iter_mut().zip(q.values()).zip(first.values()) {
            *acc += x - x0;
        }
    }
    let k = q_tables.len() as f64;
    for (d, &x0) in dev.values_mut().iter_mut().zip(first.values()) {
        *d = x0 + *d / k;
    }
    Ok(dev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    /// `‖Q̄_t − Q*_R‖_∞` when an oracle table was supplied.
    pub sup_gap: Option<f64>,
    /// Convergence bound at `t` in theorem mode.
    pub bound: Option<f64>,
    /// `(1/K) Σ_k ‖Q^k_t − Q̄_t‖_∞`.
    pub drift_mean: f64,
    /// `max_k ‖Q^k_t − Q̄_t‖_∞`.
    pub drift_max: f64,
    /// Whether an aggregation happened at the end of the step producing `t`.
    pub aggregated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: usize,
    pub q: QTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub records: Vec<RoundRecord>,
    pub final_global: QTable,
    pub snapshots: Vec<Snapshot>,
    pub gamma: f64,
    pub sync_interval: usize,
}

/// Step-by-step federated simulator. [`run_federation`] drives it to
/// completion; tests use it to observe the per-agent tables.
#[derive(Debug, Clone)]
pub struct Federation {
    config: FederationConfig,
    agents: Vec<AgentState>,
    t: usize,
    gamma: f64,
    scratch: Vec<QTable>,
}

impl Federation {
    pub fn new(config: FederationConfig, family: &EnvFamily) -> Result<Self> {
        if family.is_empty() {
            return Err(Error::EmptyInput("family has no members"));
        }
        let gamma = family.gamma();
        config.validate(gamma)?;
        if config.algorithm == Algorithm::Fedrq && config.is_theorem_mode() {
            let report = check_assumption1(&family.kernels());
            if !report.holds {
                return Err(Error::InconsistentSupport {
                    states: report.violating_states,
                });
            }
        }
        let agents = family
            .members
            .iter()
            .enumerate()
            .map(|(k, env)| AgentState::new(k, env.clone(), config.seed, config.sampled))
            .collect();
        Ok(Self {
            config,
            agents,
            t: 0,
            gamma,
            scratch: Vec::new(),
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn config(&self) -> &FederationConfig {
        &self.config
    }

    /// `Q̄_t`, the mean of the current local tables.
    pub fn global_q(&self) -> QTable {
        let tables: Vec<QTable> = self.agents.iter().map(|a| a.q.clone()).collect();
        aggregate(&tables).expect("non-empty federation")
    }

    /// Learning rate for the step taken at the current time.
    pub fn current_lr(&self) -> Result<f64> {
        self.config.learning_rate(self.t, self.gamma)
    }

    /// Runs one local step on every agent, then aggregates and broadcasts
    /// if `t + 1` is a multiple of `E`. Returns whether it aggregated.
    pub fn step(&mut self) -> Result<bool> {
        let lambda = self.current_lr()?;
        let (algorithm, mode, omega) = (self.config.algorithm, self.config.mode, self.config.omega);
        for agent in &mut self.agents {
            match algorithm {
                Algorithm::Qavg => local_step_qavg(agent, lambda, mode)?,
                Algorithm::Fedrq => local_step_fedrq(agent, lambda, omega, mode)?,
            }
        }
        self.t += 1;
        let sync = self.t % self.config.sync_interval == 0;
        if sync {
            let global = self.global_q();
            for agent in &mut self.agents {
                agent.q.values_mut().copy_from_slice(global.values());
            }
        }
        Ok(sync)
    }

    fn record(&mut self, aggregated: bool, oracle_q: Option<&QTable>) -> (RoundRecord, QTable) {
        self.scratch.clear();
        self.scratch.extend(self.agents.iter().map(|a| a.q.clone()));
        let global = aggregate(&self.scratch).expect("non-empty federation");
        let drifts: Vec<f64> = self
            .agents
            .iter()
            .map(|a| sup_distance(a.q.values(), global.values()))
            .collect();
        let drift_mean = drifts.iter().sum::<f64>() / drifts.len() as f64;
        let drift_max = drifts.iter().copied().fold(0.0, f64::max);
        let bound = if self.config.is_theorem_mode() {
            theorem1_bound(self.gamma, self.config.sync_interval, self.t).ok()
        } else {
            None
        };
        let record = RoundRecord {
            t: self.t,
            sup_gap: oracle_q.map(|q| global.sup_distance(q)),
            bound,
            drift_mean,
            drift_max,
            aggregated,
        };
        (record, global)
    }
}

/// Runs `config.total_steps` federated steps over `family`.
///
/// When `oracle_q` is given, each record carries the sup-norm gap between
/// the global table and it.
pub fn run_federation(config: &FederationConfig, family: &EnvFamily, oracle_q: Option<&QTable>) -> Result<TrainingTrace> {
    let mut fed = Federation::new(config.clone(), family)?;
    if let Some(q) = oracle_q {
        if q.n_states() != family.n_states() || q.n_actions() != family.n_actions() {
            return Err(Error::DimensionMismatch {
                what: "oracle Q table entries",
                expected: family.n_states() * family.n_actions(),
                got: q.values().len(),
            });
        }
    }
    let total = config.total_steps;
    let mut records = Vec::with_capacity(total / config.record_every + 2);
    let mut snapshots = Vec::new();
    let (first, _) = fed.record(false, oracle_q);
    records.push(first);
    let mut last_global = None;
    for _ in 0..total {
        let aggregated = fed.step()?;
        let t = fed.t();
        let wanted = t % config.record_every == 0 || t == total;
        if wanted || (aggregated && config.keep_snapshots) {
            let (record, global) = fed.record(aggregated, oracle_q);
            if aggregated && config.keep_snapshots {
                snapshots.push(Snapshot { t, q: global.clone() });
            }
            if wanted {
                records.push(record);
            }
            last_global = Some(global);
        }
    }
    let final_global = match last_global {
        Some(g) if total > 0 => g,
        _ => fed.global_q(),
    };
    Ok(TrainingTrace {
        records,
        final_global,
        snapshots,
        gamma: family.gamma(),
        sync_interval: config.sync_interval,
    })
}
