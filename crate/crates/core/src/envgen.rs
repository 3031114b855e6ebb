//! Environment generators: gridworlds, garnets, heterogeneous families and
//! perturbed test suites.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::covering::check_assumption1;
use crate::error::{Error, Result};
use crate::mdp::{TabularMDP, TransitionKernel};
use crate::rng::{stream, Stream};

/// Lower and upper clamp applied to perturbed parameters so that every
/// member keeps the support pattern of the base environment.
pub const PARAM_CLAMP: f64 = 1e-6;

/// Gridworld actions, in index order.
pub const UP: usize = 0;
pub const RIGHT: usize = 1;
pub const DOWN: usize = 2;
pub const LEFT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbParam {
    SlipProbability,
    ActionStochasticity,
}

/// A `width x height` grid with cells indexed `y * width + x`.
///
/// The agent starts in `start` (default: top-left) and the absorbing goal
/// `goal` (default: bottom-right) pays `goal_reward` per step. `pits` are
/// absorbing cells with zero reward. The intended move happens with
/// probability `1 − slip`; otherwise the agent moves to one of the two
/// lateral directions with equal probability. Independently, with
/// probability `action_noise` the chosen action is first replaced by a
/// uniformly random one. Moves into a wall leave the agent in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridworldParams {
    pub width: usize,
    pub height: usize,
    pub slip: f64,
    #[serde(default)]
    pub action_noise: f64,
    pub goal_reward: f64,
    pub gamma: f64,
    /// `(x, y)` of the start cell.
    #[serde(default)]
    pub start: Option<(usize, usize)>,
    /// `(x, y)` of the goal cell.
    #[serde(default)]
    pub goal: Option<(usize, usize)>,
    /// `(x, y)` of every pit cell.
    #[serde(default)]
    pub pits: Vec<(usize, usize)>,
}

impl GridworldParams {
    pub fn new(width: usize, height: usize, slip: f64, goal_reward: f64, gamma: f64) -> Self {
        Self {
            width,
            height,
            slip,
            action_noise: 0.0,
            goal_reward,
            gamma,
            start: None,
            goal: None,
            pits: Vec::new(),
        }
    }

    /// A `width x height` cliff: start and goal at the two bottom corners,
    /// pits along the bottom row between them.
    pub fn cliff(width: usize, height: usize, slip: f64, gamma: f64) -> Self {
        let bottom = height.saturating_sub(1);
        Self {
            start: Some((0, bottom)),
            goal: Some((width.saturating_sub(1), bottom)),
            pits: (1..width.saturating_sub(1)).map(|x| (x, bottom)).collect(),
            ..Self::new(width, height, slip, 1.0, gamma)
        }
    }

    fn cell(&self, (x, y): (usize, usize), what: &'static str) -> Result<usize> {
        if x >= self.width || y >= self.height {
            return Err(Error::config(format!("environment.{what}"), format!("cell ({x}, {y}) is outside the grid")));
        }
        Ok(y * self.width + x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarnetParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub branching: usize,
    pub gamma: f64,
    pub seed: u64,
}

pub fn make_gridworld(width: usize, height: usize, slip: f64, goal_reward: f64, gamma: f64) -> Result<TabularMDP> {
    build_gridworld(&GridworldParams::new(width, height, slip, goal_reward, gamma))
}

fn grid_move(p: &GridworldParams, s: usize, dir: usize) -> usize {
    let (x, y) = (s % p.width, s / p.width);
    let (nx, ny) = match dir {
        UP if y > 0 => (x, y - 1),
        RIGHT if x + 1 < p.width => (x + 1, y),
        DOWN if y + 1 < p.height => (x, y + 1),
        LEFT if x > 0 => (x - 1, y),
        _ => (x, y),
    };
    ny * p.width + nx
}

pub fn build_gridworld(p: &GridworldParams) -> Result<TabularMDP> {
    if p.width == 0 || p.height == 0 || p.width * p.height < 2 {
        return Err(Error::param(
            "grid cells",
            (p.width * p.height) as f64,
            "gridworld needs at least two cells",
        ));
    }
    if !(0.0..1.0).contains(&p.slip) {
        return Err(Error::param("slip", p.slip, "must lie in [0, 1)"));
    }
    if !(0.0..1.0).contains(&p.action_noise) {
        return Err(Error::param("action_noise", p.action_noise, "must lie in [0, 1)"));
    }
    if !(p.goal_reward > 0.0 && p.goal_reward <= 1.0) {
        return Err(Error::param("goal_reward", p.goal_reward, "must lie in (0, 1]"));
    }
    let ns = p.width * p.height;
    let start = p.start.map_or(Ok(0), |c| p.cell(c, "start"))?;
    let goal = p.goal.map_or(Ok(ns - 1), |c| p.cell(c, "goal"))?;
    let mut absorbing = vec![false; ns];
    absorbing[goal] = true;
    for &c in &p.pits {
        let pit = p.cell(c, "pits")?;
        if pit == goal || pit == start {
            return Err(Error::config("environment.pits", "a pit cannot be the start or the goal"));
        }
        absorbing[pit] = true;
    }
    if start == goal {
        return Err(Error::config("environment.start", "start and goal must differ"));
    }
    // Direction distribution of the slip model for each intended action.
    let slip_dist = |a: usize| -> [f64; 4] {
        let mut d = [0.0; 4];
        d[a] += 1.0 - p.slip;
        d[(a + 1) % 4] += p.slip / 2.0;
        d[(a + 3) % 4] += p.slip / 2.0;
        d
    };
    let mut kernel = TransitionKernel::zeros(ns, 4);
    for s in 0..ns {
        for a in 0..4 {
            let row = kernel.row_mut(s, a);
            if absorbing[s] {
                row[s] = 1.0;
                continue;
            }
            let own = slip_dist(a);
            for dir in 0..4 {
                let mut w = (1.0 - p.action_noise) * own[dir];
                if p.action_noise > 0.0 {
                    let mixed: f64 = (0..4).map(|b| slip_dist(b)[dir]).sum::<f64>() / 4.0;
                    w += p.action_noise * mixed;
                }
                if w != 0.0 {
                    row[grid_move(p, s, dir)] += w;
                }
            }
        }
    }
    let mut reward = vec![0.0; ns * 4];
    for r in &mut reward[goal * 4..(goal + 1) * 4] {
        *r = p.goal_reward;
    }
    let mut initial = vec![0.0; ns];
    initial[start] = 1.0;
    TabularMDP::new(kernel, reward, p.gamma, initial)
}

/// Random MDP with exactly `branching` successors per `(s, a)`, Dirichlet(1)
/// masses and uniform rewards in `[0, 1)`. The initial distribution is
/// uniform.
pub fn make_garnet(p: &GarnetParams) -> Result<TabularMDP> {
    if p.n_states == 0 || p.n_actions == 0 {
        return Err(Error::EmptyInput("garnet needs states and actions"));
    }
    if p.branching == 0 || p.branching > p.n_states {
        return Err(Error::param(
            "branching",
            p.branching as f64,
            format!("must lie in 1..={}", p.n_states),
        ));
    }
    let mut rng = stream(p.seed, Stream::Garnet);
    let ns = p.n_states;
    let mut kernel = TransitionKernel::zeros(ns, p.n_actions);
    for s in 0..ns {
        for a in 0..p.n_actions {
            let support = index::sample(&mut rng, ns, p.branching);
            let masses: Vec<f64> = (0..p.branching).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = masses.iter().sum();
            let row = kernel.row_mut(s, a);
            for (next, m) in support.iter().zip(masses) {
                row[next] = m / total;
            }
        }
    }
    let reward = (0..ns * p.n_actions).map(|_| rng.random::<f64>()).collect();
    TabularMDP::new(kernel, reward, p.gamma, vec![1.0 / ns as f64; ns])
}

/// Mixes every row with the action-averaged row at the same state:
/// `(1 − m)·P(·|s,a) + m·mean_b P(·|s,b)`.
pub fn mix_actions(kernel: &TransitionKernel, m: f64) -> TransitionKernel {
    let (ns, na) = (kernel.n_states(), kernel.n_actions());
    let mut out = TransitionKernel::zeros(ns, na);
    for s in 0..ns {
        let mean: Vec<f64> = (0..ns)
            .map(|next| (0..na).map(|b| kernel.prob(s, b, next)).sum::<f64>() / na as f64)
            .collect();
        for a in 0..na {
            for (next, o) in out.row_mut(s, a).iter_mut().enumerate() {
                *o = (1.0 - m) * kernel.prob(s, a, next) + m * mean[next];
            }
        }
    }
    out
}

/// A parametric environment that can be rebuilt at other parameter values.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvTemplate {
    Gridworld(GridworldParams),
    /// An arbitrary MDP whose kernel is mixed across actions with weight
    /// `stochasticity` (see [`mix_actions`]).
    Tabular { mdp: TabularMDP, stochasticity: f64 },
}

impl EnvTemplate {
    pub fn param(&self, which: PerturbParam) -> Result<f64> {
        match (self, which) {
            (EnvTemplate::Gridworld(p), PerturbParam::SlipProbability) => Ok(p.slip),
            (EnvTemplate::Gridworld(p), PerturbParam::ActionStochasticity) => Ok(p.action_noise),
            (EnvTemplate::Tabular { stochasticity, .. }, PerturbParam::ActionStochasticity) => Ok(*stochasticity),
            (EnvTemplate::Tabular { .. }, PerturbParam::SlipProbability) => Err(Error::config(
                "family.perturb_param",
                "slip_probability is only defined for gridworlds",
            )),
        }
    }

    pub fn build(&self, which: PerturbParam, value: f64) -> Result<TabularMDP> {
        match self {
            EnvTemplate::Gridworld(p) => {
                let mut p = p.clone();
                match which {
                    PerturbParam::SlipProbability => p.slip = value,
                    PerturbParam::ActionStochasticity => p.action_noise = value,
                }
                build_gridworld(&p)
            }
            EnvTemplate::Tabular { mdp, .. } => {
                self.param(which)?;
                if !(0.0..1.0).contains(&value) {
                    return Err(Error::param("action_stochasticity", value, "must lie in [0, 1)"));
                }
                mdp.with_kernel(mix_actions(&mdp.kernel, value))
            }
        }
    }

    pub fn nominal(&self, which: PerturbParam) -> Result<TabularMDP> {
        self.build(which, self.param(which)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub base: EnvTemplate,
    pub n_agents: usize,
    pub perturbation_rate: f64,
    pub seed: u64,
    pub perturb_param: PerturbParam,
}

/// `K` environments that share states, actions, rewards and discount.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvFamily {
    pub members: Vec<TabularMDP>,
    /// Perturbation factor `n_k` per member.
    pub factors: Vec<f64>,
    /// Parameter value `m_k` per member after clamping; `None` for members
    /// that were not generated from a template.
    pub params: Vec<Option<f64>>,
    /// Whether `m_k` was clamped to preserve support.
    pub clamped: Vec<bool>,
}

impl EnvFamily {
    /// Wraps pre-built members; rewards and discount must agree bit-exactly.
    pub fn from_members(members: Vec<TabularMDP>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyInput("family has no members"))?;
        for m in &members[1..] {
            if m.n_states() != first.n_states() || m.n_actions() != first.n_actions() {
                return Err(Error::DimensionMismatch {
                    what: "family member states",
                    expected: first.n_states(),
                    got: m.n_states(),
                });
            }
            if m.reward != first.reward || m.gamma.to_bits() != first.gamma.to_bits() {
                return Err(Error::InvalidMdp(
                    "family members must share rewards and discount".into(),
                ));
            }
        }
        let k = members.len();
        Ok(Self {
            members,
            factors: vec![0.0; k],
            params: vec![None; k],
            clamped: vec![false; k],
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn gamma(&self) -> f64 {
        self.members[0].gamma
    }

    pub fn n_states(&self) -> usize {
        self.members[0].n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.members[0].n_actions()
    }

    pub fn reward(&self) -> &[f64] {
        &self.members[0].reward
    }

    pub fn kernels(&self) -> Vec<TransitionKernel> {
        self.members.iter().map(|m| m.kernel.clone()).collect()
    }
}

/// Draws `n_k ~ U(−p, p)` per agent and rebuilds member `k` at parameter
/// `m·(1 + n_k)`.
pub fn perturb_family(spec: &FamilySpec) -> Result<EnvFamily> {
    if spec.n_agents == 0 {
        return Err(Error::param("n_agents", 0.0, "need at least one agent"));
    }
    let p = spec.perturbation_rate;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::param("perturbation_rate", p, "must lie in [0, 1)"));
    }
    let m = spec.base.param(spec.perturb_param)?;
    if m * (1.0 + p) >= 1.0 {
        return Err(Error::param(
            "perturbation_rate",
            p,
            format!("base parameter {m} leaves [0, 1) at the largest perturbation"),
        ));
    }
    let mut members = Vec::with_capacity(spec.n_agents);
    let mut factors = Vec::with_capacity(spec.n_agents);
    let mut params = Vec::with_capacity(spec.n_agents);
    let mut clamped = Vec::with_capacity(spec.n_agents);
    for k in 0..spec.n_agents {
        let n_k = if p == 0.0 {
            0.0
        } else {
            stream(spec.seed, Stream::Perturbation(k)).random_range(-p..p)
        };
        let raw = m * (1.0 + n_k);
        let m_k = if m > 0.0 {
            raw.clamp(PARAM_CLAMP, 1.0 - PARAM_CLAMP)
        } else {
            raw
        };
        members.push(spec.base.build(spec.perturb_param, m_k)?);
        factors.push(n_k);
        params.push(Some(m_k));
        clamped.push(m_k != raw);
    }
    let kernels: Vec<TransitionKernel> = members.iter().map(|m| m.kernel.clone()).collect();
    let support = check_assumption1(&kernels);
    if !support.holds {
        return Err(Error::InconsistentSupport {
            states: support.violating_states,
        });
    }
    Ok(EnvFamily {
        members,
        factors,
        params,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedEnv {
    pub factor: f64,
    pub mdp: TabularMDP,
}

/// One environment per factor, with the parameter scaled to `m·factor`.
pub fn perturbed_test_suite(base: &EnvTemplate, param: PerturbParam, factors: &[f64]) -> Result<Vec<PerturbedEnv>> {
    let m = base.param(param)?;
    factors
        .iter()
        .map(|&factor| {
            let value = m * factor;
            if !(0.0..1.0).contains(&value) || factor < 0.0 {
                return Err(Error::param(
                    "sweep factor",
                    factor,
                    format!("parameter {value} leaves [0, 1)"),
                ));
            }
            Ok(PerturbedEnv {
                factor,
                mdp: base.build(param, value)?,
            })
        })
        .collect()
}

/// `0.1, 0.2, …, 1.9`.
pub fn default_sweep_factors() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 10.0).collect()
}
