//! Average and minimum return across local environments, and robustness
//! sweeps over perturbed test suites.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envgen::{EnvFamily, PerturbedEnv};
use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy_exact, Policy, TabularMDP};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub returns: Vec<f64>,
    pub average: f64,
    pub minimum: f64,
    pub argmin: usize,
}

impl EvalReport {
    pub fn from_returns(returns: Vec<f64>) -> Result<Self> {
        if returns.is_empty() {
            return Err(Error::EmptyInput("no returns to summarize"));
        }
        let average = returns.iter().sum::<f64>() / returns.len() as f64;
        let mut argmin = 0;
        for (i, &r) in returns.iter().enumerate() {
            if r < returns[argmin] {
                argmin = i;
            }
        }
        Ok(Self {
            minimum: returns[argmin],
            average,
            argmin,
            returns,
        })
    }
}

/// How returns are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Solve the linear policy-evaluation fixed point.
    Exact,
    /// Average of truncated episodic rollouts.
    Rollout { episodes: usize, horizon: usize, seed: u64 },
}

fn evaluate(mdp: &TabularMDP, pi: &Policy, mode: EvalMode) -> Result<f64> {
    match mode {
        EvalMode::Exact => evaluate_policy_exact(mdp, pi),
        EvalMode::Rollout { episodes, horizon, seed } => {
            Ok(evaluate_policy_rollout(mdp, pi, episodes, horizon, seed)?.mean)
        }
    }
}

pub fn evaluate_on_family(pi: &Policy, family: &EnvFamily) -> Result<EvalReport> {
    evaluate_on_family_with(pi, family, EvalMode::Exact)
}

pub fn evaluate_on_family_with(pi: &Policy, family: &EnvFamily, mode: EvalMode) -> Result<EvalReport> {
    let returns = family
        .members
        .iter()
        .map(|m| evaluate(m, pi, mode))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_returns(returns)
}

/// `(factor, return)` per suite member, ordered by factor.
pub fn robustness_sweep(pi: &Policy, suite: &[PerturbedEnv]) -> Result<Vec<(f64, f64)>> {
    if suite.is_empty() {
        return Err(Error::EmptyInput("sweep suite"));
    }
    let mut out = suite
        .iter()
        .map(|e| Ok((e.factor, evaluate_policy_exact(&e.mdp, pi)?)))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

pub fn sweep_minimum(sweep: &[(f64, f64)]) -> f64 {
    sweep.iter().map(|&(_, r)| r).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Monte-Carlo estimate of the discounted return from `d₀`, truncating each
/// episode after `horizon` steps.
pub fn evaluate_policy_rollout(
    mdp: &TabularMDP,
    pi: &Policy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<RolloutEstimate> {
    if episodes < 2 {
        return Err(Error::param("episodes", episodes as f64, "need at least two episodes"));
    }
    let mut rng = stream(seed, Stream::Rollout);
    let draw = |rng: &mut crate::rng::Rng, probs: &[f64]| -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    };
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..episodes {
        let mut s = draw(&mut rng, &mdp.initial_dist);
        let (mut g, mut discount) = (0.0, 1.0);
        for _ in 0..horizon {
            let a = draw(&mut rng, pi.row(s));
            g += discount * mdp.reward(s, a);
            discount *= mdp.gamma;
            s = draw(&mut rng, mdp.kernel.row(s, a));
        }
        sum += g;
        sum_sq += g * g;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(RolloutEstimate {
        mean,
        std_err: (var / n).sqrt(),
    })
}
