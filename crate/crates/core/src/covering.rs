//! The covering set: average kernel, neighbor sets, heterogeneity and
//! membership.
//!
//! For a family of kernels `P_1..P_K` the covering set of radius `ω` is the
//! product over `(s, a)` of the mixtures `(1 − ω)·P̄(·|s,a) + ω·q` where `q`
//! is any distribution supported on the neighbor set of `s`. The smallest
//! radius that contains every member is
//!
//! ```text
//! κ(s,a) = max_k max_{s' : P̄(s'|s,a) > 0} (1 − P_k(s'|s,a) / P̄(s'|s,a))
//! ```
//!
//! maximised over `(s, a)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TransitionKernel;

/// Tolerance on reconstructed mixture weights in [`membership_check`].
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Tolerance for the `ω = 0` equality check against the average kernel.
pub const CENTER_TOL: f64 = 1e-12;
/// Heterogeneity values below this are reported as exactly zero.
const KAPPA_SNAP: f64 = 1e-12;

/// Per-state sets of possible next states, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborSets {
    sets: Vec<Vec<usize>>,
}

impl NeighborSets {
    pub fn from_sets(mut sets: Vec<Vec<usize>>) -> Self {
        for set in &mut sets {
            set.sort_unstable();
            set.dedup();
        }
        Self { sets }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn get(&self, s: usize) -> &[usize] {
        &self.sets[s]
    }

    pub fn contains(&self, s: usize, next: usize) -> bool {
        self.sets[s].binary_search(&next).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.sets.iter().map(Vec::as_slice)
    }

    pub(crate) fn check_len(&self, n_states: usize) -> Result<()> {
        if self.sets.len() != n_states {
            return Err(Error::DimensionMismatch {
                what: "neighbor sets",
                expected: n_states,
                got: self.sets.len(),
            });
        }
        Ok(())
    }
}

/// Entrywise mean of the member kernels.
pub fn average_kernel(kernels: &[TransitionKernel]) -> Result<TransitionKernel> {
    let first = kernels.first().ok_or(Error::EmptyInput("no kernels to average"))?;
    check_same_shape(kernels)?;
    let k = kernels.len() as f64;
    let mut sum = vec![0.0; first.as_slice().len()];
    for kernel in kernels {
        for (acc, &p) in sum.iter_mut().zip(kernel.as_slice()) {
            *acc += p;
        }
    }
    for x in &mut sum {
        *x /= k;
    }
    TransitionKernel::new(first.n_states(), first.n_actions(), sum)
}

fn check_same_shape(kernels: &[TransitionKernel]) -> Result<()> {
    let first = &kernels[0];
    for kernel in &kernels[1..] {
        if kernel.n_states() != first.n_states() {
            return Err(Error::DimensionMismatch {
                what: "kernel states",
                expected: first.n_states(),
                got: kernel.n_states(),
            });
        }
        if kernel.n_actions() != first.n_actions() {
            return Err(Error::DimensionMismatch {
                what: "kernel actions",
                expected: first.n_actions(),
                got: kernel.n_actions(),
            });
        }
    }
    Ok(())
}

/// `N^s = { s' : Σ_a P(s'|s,a) ≠ 0 }`, using exact stored probabilities.
pub fn compute_neighbors(kernel: &TransitionKernel) -> NeighborSets {
    let ns = kernel.n_states();
    let sets = (0..ns)
        .map(|s| {
            (0..ns)
                .filter(|&next| {
                    (0..kernel.n_actions())
                        .map(|a| kernel.prob(s, a, next))
                        .sum::<f64>()
                        != 0.0
                })
                .collect()
        })
        .collect();
    NeighborSets { sets }
}

/// The covering set `P_ω`: radius, centre and neighbor sets of the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveringSpec {
    pub omega: f64,
    pub neighbors: NeighborSets,
    pub avg_kernel: TransitionKernel,
}

impl CoveringSpec {
    pub fn new(omega: f64, avg_kernel: TransitionKernel) -> Result<Self> {
        crate::mdp::check_omega(omega)?;
        let neighbors = compute_neighbors(&avg_kernel);
        Ok(Self {
            omega,
            neighbors,
            avg_kernel,
        })
    }

    pub fn from_family(omega: f64, kernels: &[TransitionKernel]) -> Result<Self> {
        Self::new(omega, average_kernel(kernels)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityReport {
    /// `kappa[s][a]`.
    pub kappa: Vec<Vec<f64>>,
    pub kappa_max: f64,
    pub feasible: bool,
}

impl HeterogeneityReport {
    pub fn kappa_at(&self, s: usize, a: usize) -> f64 {
        self.kappa[s][a]
    }
}

/// Per-`(s, a)` heterogeneity of a kernel family and the minimal feasible
/// covering radius.
pub fn heterogeneity(kernels: &[TransitionKernel]) -> Result<HeterogeneityReport> {
    let avg = average_kernel(kernels)?;
    let (ns, na) = (avg.n_states(), avg.n_actions());
    let mut kappa = vec![vec![0.0; na]; ns];
    let mut kappa_max: f64 = 0.0;
    for (s, row) in kappa.iter_mut().enumerate() {
        for (a, cell) in row.iter_mut().enumerate() {
            let center = avg.row(s, a);
            let mut worst: f64 = 0.0;
            for kernel in kernels {
                for (&pk, &pbar) in kernel.row(s, a).iter().zip(center) {
                    if pbar > 0.0 {
                        worst = worst.max(1.0 - pk / pbar);
                    }
                }
            }
            if worst < KAPPA_SNAP {
                worst = 0.0;
            }
            let worst = worst.min(1.0);
            *cell = worst;
            kappa_max = kappa_max.max(worst);
        }
    }
    Ok(HeterogeneityReport {
        kappa,
        kappa_max,
        feasible: kappa_max < 1.0,
    })
}

/// Whether every row of `kernel_k` lies in the covering set slice at the
/// same `(s, a)`.
pub fn membership_check(kernel_k: &TransitionKernel, spec: &CoveringSpec) -> Result<bool> {
    let center = &spec.avg_kernel;
    if !kernel_k.same_shape(center) {
        return Err(Error::DimensionMismatch {
            what: "kernel states x actions",
            expected: center.n_states() * center.n_actions(),
            got: kernel_k.n_states() * kernel_k.n_actions(),
        });
    }
    let omega = spec.omega;
    if omega == 0.0 {
        return Ok(kernel_k
            .as_slice()
            .iter()
            .zip(center.as_slice())
            .all(|(a, b)| (a - b).abs() <= CENTER_TOL));
    }
    for s in 0..center.n_states() {
        for a in 0..center.n_actions() {
            let mut sum = 0.0;
            for (next, (&pk, &pbar)) in kernel_k.row(s, a).iter().zip(center.row(s, a)).enumerate() {
                let q = (pk - (1.0 - omega) * pbar) / omega;
                if q < -MEMBERSHIP_TOL {
                    return Ok(false);
                }
                if !spec.neighbors.contains(s, next) && q.abs() > MEMBERSHIP_TOL {
                    return Ok(false);
                }
                sum += q;
            }
            if (sum - 1.0).abs() > MEMBERSHIP_TOL {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assumption1Report {
    pub holds: bool,
    pub violating_states: Vec<usize>,
}

/// Checks that every member has the same neighbor set at every state.
pub fn check_assumption1(kernels: &[TransitionKernel]) -> Assumption1Report {
    let sets: Vec<NeighborSets> = kernels.iter().map(compute_neighbors).collect();
    let mut violating_states = Vec::new();
    if let Some(first) = sets.first() {
        for s in 0..first.len() {
            if sets[1..].iter().any(|other| other.len() != first.len() || other.get(s) != first.get(s)) {
                violating_states.push(s);
            }
        }
    }
    Assumption1Report {
        holds: violating_states.is_empty(),
        violating_states,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_row_kernel(row: [f64; 2]) -> TransitionKernel {
        // 2 states, 1 action; row (0,0) varies, row (1,0) fixed uniform.
        TransitionKernel::new(1 + 1, 1, vec![row[0], row[1], 0.5, 0.5]).unwrap()
    }

    #[test]
    fn averaging_identical_kernels_is_identity() {
        let k = one_row_kernel([0.3, 0.7]);
        assert_eq!(average_kernel(&[k.clone(), k.clone()]).unwrap(), k);
    }

    #[test]
    fn averaging_opposite_rows() {
        let avg = average_kernel(&[one_row_kernel([1.0, 0.0]), one_row_kernel([0.0, 1.0])]).unwrap();
        assert_eq!(avg.row(0, 0), &[0.5, 0.5]);
    }

    #[test]
    fn average_errors() {
        assert!(matches!(average_kernel(&[]), Err(Error::EmptyInput(_))));
        let small = TransitionKernel::new(1, 1, vec![1.0]).unwrap();
        assert!(matches!(
            average_kernel(&[small, one_row_kernel([1.0, 0.0])]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn neighbors_of_identity_and_uniform() {
        let id = TransitionKernel::from_fn(4, 2, |s, _, n| if s == n { 1.0 } else { 0.0 });
        let n = compute_neighbors(&id);
        for s in 0..4 {
            assert_eq!(n.get(s), &[s]);
        }
        let uniform = TransitionKernel::from_fn(4, 2, |_, _, _| 0.25);
        let n = compute_neighbors(&uniform);
        for s in 0..4 {
            assert_eq!(n.get(s), &[0, 1, 2, 3]);
        }
    }

    #[test]
    fn neighbors_union_over_actions() {
        let k = TransitionKernel::from_fn(4, 2, |s, a, n| match (s, a) {
            (0, 1) => (n == 3) as u8 as f64,
            _ => (n == s) as u8 as f64,
        });
        assert_eq!(compute_neighbors(&k).get(0), &[0, 3]);
    }

    #[test]
    fn kappa_identical_is_zero() {
        let k = one_row_kernel([0.3, 0.7]);
        let report = heterogeneity(&[k.clone(), k.clone(), k]).unwrap();
        assert_eq!(report.kappa_max, 0.0);
        assert!(report.feasible);
    }

    #[test]
    fn kappa_two_member_example() {
        let report = heterogeneity(&[one_row_kernel([0.9, 0.1]), one_row_kernel([0.5, 0.5])]).unwrap();
        assert!((report.kappa_at(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(report.kappa_at(1, 0), 0.0);
        assert!((report.kappa_max - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_disjoint_support_infeasible() {
        let kernels = [one_row_kernel([1.0, 0.0]), one_row_kernel([0.0, 1.0])];
        let report = heterogeneity(&kernels).unwrap();
        assert_eq!(report.kappa_max, 1.0);
        assert!(!report.feasible);
        assert!(!check_assumption1(&kernels).holds);
    }

    #[test]
    fn membership_at_center_and_zero_radius() {
        let kernels = [one_row_kernel([0.9, 0.1]), one_row_kernel([0.5, 0.5])];
        let avg = average_kernel(&kernels).unwrap();
        for omega in [0.0, 0.1, 0.5, 0.99] {
            let spec = CoveringSpec::new(omega, avg.clone()).unwrap();
            assert!(membership_check(&avg, &spec).unwrap());
        }
        let spec = CoveringSpec::new(0.0, avg).unwrap();
        assert!(!membership_check(&kernels[0], &spec).unwrap());
    }

    #[test]
    fn membership_threshold_is_kappa() {
        let kernels = [one_row_kernel([0.9, 0.1]), one_row_kernel([0.5, 0.5])];
        let kappa = heterogeneity(&kernels).unwrap().kappa_max;
        let at = CoveringSpec::from_family(kappa, &kernels).unwrap();
        assert!(kernels.iter().all(|k| membership_check(k, &at).unwrap()));
        let below = CoveringSpec::from_family(0.9 * kappa, &kernels).unwrap();
        assert!(!kernels.iter().all(|k| membership_check(k, &below).unwrap()));
    }

    #[test]
    fn assumption1_cases() {
        let a = one_row_kernel([0.3, 0.7]);
        let b = one_row_kernel([0.6, 0.4]);
        assert!(check_assumption1(&[a.clone(), a.clone()]).holds);
        assert!(check_assumption1(&[a.clone(), b]).holds);
        let report = check_assumption1(&[a.clone(), a, one_row_kernel([1.0, 0.0])]);
        assert!(!report.holds);
        assert_eq!(report.violating_states, vec![0]);
    }
}
