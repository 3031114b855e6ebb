//! Ground truth for a family: the averaged robust Bellman operator, its
//! fixed point, and the convergence bound check for training traces.

use serde::{Deserialize, Serialize};

use crate::covering::{average_kernel, check_assumption1, compute_neighbors, NeighborSets};
use crate::envgen::EnvFamily;
use crate::error::{Error, Result};
use crate::fed::{TrainingTrace, THEOREM_MIN_GAMMA};
use crate::mdp::{
    check_omega, dot, greedy_policy, neighbor_minima, robust_target, sup_distance, Policy, QTable, TabularMDP,
    MAX_ITERATIONS,
};

/// The averaged robust operator: average kernel, its neighbor sets and the
/// shared rewards.
#[derive(Debug, Clone)]
pub struct MeanRobustOperator {
    pub center: TabularMDP,
    pub neighbors: NeighborSets,
    pub omega: f64,
}

impl MeanRobustOperator {
    pub fn new(family: &EnvFamily, omega: f64) -> Result<Self> {
        check_omega(omega)?;
        let kernels = family.kernels();
        let support = check_assumption1(&kernels);
        if !support.holds {
            return Err(Error::InconsistentSupport {
                states: support.violating_states,
            });
        }
        let avg = average_kernel(&kernels)?;
        let neighbors = compute_neighbors(&avg);
        let center = family.members[0].with_kernel(avg)?;
        Ok(Self {
            center,
            neighbors,
            omega,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.center.gamma
    }

    pub fn apply(&self, q: &QTable) -> Result<QTable> {
        let mut out = q.clone();
        self.apply_into(q.values(), out.values_mut())?;
        Ok(out)
    }

    fn apply_into(&self, q: &[f64], out: &mut [f64]) -> Result<()> {
        let (ns, na) = (self.center.n_states(), self.center.n_actions());
        let v: Vec<f64> = q
            .chunks(na)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut worst = Vec::with_capacity(ns);
        neighbor_minima(&v, &self.neighbors, &mut worst)?;
        for s in 0..ns {
            for a in 0..na {
                let expected = dot(self.center.kernel.row(s, a), &v);
                out[s * na + a] = robust_target(self.center.reward(s, a), self.center.gamma, self.omega, expected, worst[s]);
            }
        }
        Ok(())
    }
}

/// Applies the averaged robust operator built from `P̄` and its neighbor
/// sets. Requires every member to share the same neighbor sets.
pub fn mean_robust_bellman_apply(family: &EnvFamily, q: &QTable, omega: f64) -> Result<QTable> {
    if q.n_states() != family.n_states() || q.n_actions() != family.n_actions() {
        return Err(Error::DimensionMismatch {
            what: "Q table entries",
            expected: family.n_states() * family.n_actions(),
            got: q.values().len(),
        });
    }
    MeanRobustOperator::new(family, omega)?.apply(q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    #[serde(with = "crate::io::qtable_rows")]
    pub q_star: QTable,
    pub v_star: Vec<f64>,
    #[serde(with = "crate::io::policy_rows")]
    pub pi_star: Policy,
    pub iterations: usize,
    pub residual: f64,
}

/// Fixed point of the averaged robust operator, iterated from zero.
///
/// Stops once the step change drops below `tol·(1 − γ)/γ`, so the returned
/// table is within `tol` of the fixed point.
pub fn robust_q_star(family: &EnvFamily, omega: f64, tol: f64) -> Result<OracleResult> {
    robust_q_star_from(family, omega, tol, QTable::zeros(family.n_states(), family.n_actions()))
}

pub fn robust_q_star_from(family: &EnvFamily, omega: f64, tol: f64, init: QTable) -> Result<OracleResult> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", tol, "must be positive"));
    }
    let op = MeanRobustOperator::new(family, omega)?;
    solve(&op, tol, init)
}

pub(crate) fn solve(op: &MeanRobustOperator, tol: f64, init: QTable) -> Result<OracleResult> {
    let gamma = op.gamma();
    let threshold = tol * (1.0 - gamma) / gamma;
    let mut q = init;
    let mut next = q.clone();
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while change >= threshold {
        if iterations == MAX_ITERATIONS {
            return Err(Error::IterationCap {
                iterations,
                last_change: change,
            });
        }
        op.apply_into(q.values(), next.values_mut())?;
        change = sup_distance(q.values(), next.values());
        std::mem::swap(&mut q, &mut next);
        iterations += 1;
    }
    let residual = op.apply(&q)?.sup_distance(&q);
    Ok(OracleResult {
        v_star: q.state_values(),
        pi_star: greedy_policy(&q),
        q_star: q,
        iterations,
        residual,
    })
}

/// `16γ(E − 1) / ((1 − γ)³ (t + E))`.
pub fn theorem1_bound(gamma: f64, sync_interval: usize, t: usize) -> Result<f64> {
    if !(THEOREM_MIN_GAMMA..1.0).contains(&gamma) {
        return Err(Error::param("gamma", gamma, "bound holds for gamma in [0.2, 1)"));
    }
    if sync_interval <= 1 {
        return Err(Error::param("sync_interval", sync_interval as f64, "bound requires E > 1"));
    }
    let e = sync_interval as f64;
    Ok(16.0 * gamma * (e - 1.0) / ((1.0 - gamma).powi(3) * (t as f64 + e)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundCheck {
    pub t: usize,
    pub gap: Option<f64>,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub rounds: Vec<RoundCheck>,
    pub violations: usize,
    pub first_violation: Option<usize>,
    /// `‖Q̄_T − Q*_R‖_∞` recomputed from the final table.
    pub final_gap: f64,
    pub final_tol: f64,
    pub converged: bool,
    pub pass: bool,
}

/// Checks every recorded gap against the bound and the final gap against
/// `final_tol`. Records without a gap count as violations.
pub fn verify_convergence(
    trace: &TrainingTrace,
    oracle: &OracleResult,
    gamma: f64,
    sync_interval: usize,
    final_tol: f64,
) -> Result<VerificationReport> {
    let mut rounds = Vec::with_capacity(trace.records.len());
    let mut violations = 0;
    let mut first_violation = None;
    for r in &trace.records {
        let bound = theorem1_bound(gamma, sync_interval, r.t)?;
        let ok = matches!(r.sup_gap, Some(g) if g <= bound);
        if !ok {
            violations += 1;
            first_violation.get_or_insert(r.t);
        }
        rounds.push(RoundCheck {
            t: r.t,
            gap: r.sup_gap,
            bound,
            ok,
        });
    }
    let final_gap = trace.final_global.sup_distance(&oracle.q_star);
    let converged = final_gap <= final_tol;
    Ok(VerificationReport {
        rounds,
        violations,
        first_violation,
        final_gap,
        final_tol,
        converged,
        pass: violations == 0 && converged,
    })
}
