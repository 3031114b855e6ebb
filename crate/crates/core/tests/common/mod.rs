#![allow(dead_code)]

use fedrq::covering::NeighborSets;
use fedrq::envgen::{make_garnet, perturb_family, EnvFamily, EnvTemplate, FamilySpec, GarnetParams, PerturbParam};
use fedrq::expectile::{ReplayBuffer, Transition};
use fedrq::mdp::{QTable, TabularMDP, TransitionKernel};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn garnet(n_states: usize, n_actions: usize, branching: usize, gamma: f64, seed: u64) -> TabularMDP {
    make_garnet(&GarnetParams {
        n_states,
        n_actions,
        branching,
        gamma,
        seed,
    })
    .unwrap()
}

/// `K` action-mixed garnet variants sharing one support pattern.
pub fn garnet_family(n_states: usize, n_actions: usize, gamma: f64, k: usize, seed: u64) -> EnvFamily {
    let base = garnet(n_states, n_actions, 3.min(n_states), gamma, seed);
    perturb_family(&FamilySpec {
        base: EnvTemplate::Tabular {
            mdp: base,
            stochasticity: 0.3,
        },
        n_agents: k,
        perturbation_rate: 0.5,
        seed: seed.wrapping_add(1000),
        perturb_param: PerturbParam::ActionStochasticity,
    })
    .unwrap()
}

pub fn random_q(ns: usize, na: usize, scale: f64, rng: &mut StdRng) -> QTable {
    QTable::from_fn(ns, na, |_, _| rng.random_range(-scale..scale))
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// `V = (I − γ P)⁻¹ r` for a Markov chain with rows `p[s]`.
pub fn chain_values(p: &[Vec<f64>], r: &[f64], gamma: f64) -> Vec<f64> {
    let n = r.len();
    let a = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j)) - gamma * p[i][j]).collect())
        .collect();
    solve_linear(a, r.to_vec())
}

pub fn sup(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A family of `k` kernels whose rows are random on one shared support.
pub fn random_family(ns: usize, na: usize, k: usize, g: &mut StdRng) -> Vec<TransitionKernel> {
    let support: Vec<Vec<bool>> = (0..ns * na)
        .map(|_| {
            let mut row: Vec<bool> = (0..ns).map(|_| g.random_bool(0.5)).collect();
            let forced = g.random_range(0..ns);
            row[forced] = true;
            row
        })
        .collect();
    (0..k)
        .map(|_| {
            let mut probs = Vec::with_capacity(ns * na * ns);
            for row in &support {
                let w: Vec<f64> = row.iter().map(|&on| if on { g.random_range(0.05..1.0) } else { 0.0 }).collect();
                let total: f64 = w.iter().sum();
                probs.extend(w.iter().map(|x| x / total));
            }
            TransitionKernel::new(ns, na, probs).unwrap()
        })
        .collect()
}

/// `per_neighbor` transitions from every state to each of its neighbors.
pub fn balanced_buffer(neighbors: &NeighborSets, per_neighbor: usize) -> ReplayBuffer {
    let mut buf = ReplayBuffer::new(1 << 20);
    for (s, set) in neighbors.iter().enumerate() {
        for &next in set {
            for _ in 0..per_neighbor {
                buf.push(Transition { s, a: 0, r: 0.0, next });
            }
        }
    }
    buf
}
