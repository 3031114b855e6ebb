//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the report is always printed.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use common::{balanced_buffer, garnet, garnet_family, random_family, random_q, rng, sup};
use fedrq::covering::{average_kernel, check_assumption1, compute_neighbors, heterogeneity, membership_check, CoveringSpec};
use fedrq::envgen::{perturb_family, EnvFamily, EnvTemplate, FamilySpec, GridworldParams, PerturbParam};
use fedrq::expectile::{exact_degree, expectile_grad, expectile_loss, fit_degree, DEFAULT_LR, DEFAULT_STEPS, DEFAULT_TAU};
use fedrq::experiment::{compare_algorithms, run_experiment, Comparison, ExperimentConfig, OmegaSetting, Overrides};
use fedrq::fed::{run_federation, Algorithm, Federation, FederationConfig, MinTerm, Mode};
use fedrq::mdp::{
    bellman_optimality_apply, robust_bellman_apply, robust_policy_evaluation, Policy, QTable, FIXED_POINT_TOL,
};
use fedrq::oracle::{robust_q_star, MeanRobustOperator};
use rand::Rng;

const ORACLE_TOL: f64 = 1e-12;
const FINAL_TOL: f64 = 1e-4;
const PARITY_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;
const AVERAGE_TOL: f64 = 1e-12;
const VALUE_TOL: f64 = 1e-8;
const GRAD_TOL: f64 = 1e-6;
/// Scaled by `1/(1 − γ)`; fixed after one calibration run over 120 garnets
/// whose worst scaled error was 0.027.
const DEGREE_TOL: f64 = 0.05;
const RUNTIME_BUDGET_SECS: f64 = 120.0;
/// Two returns each certified within [`FIXED_POINT_TOL`].
const RETURN_TOL: f64 = 2.0 * FIXED_POINT_TOL;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn sample_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/sample.toml");
    ExperimentConfig::load(&path).unwrap()
}

/// One garnet family per `(γ, E)` cell of the protocol grid.
struct TheoremRun {
    gamma: f64,
    sync_interval: usize,
    n_states: usize,
    n_actions: usize,
    violations: usize,
    drift_violations: usize,
    final_gap: f64,
    worst_gap_ratio: f64,
    worst_drift_ratio: f64,
    support_ok: bool,
}

fn theorem_run(index: u64) -> TheoremRun {
    let gamma = [0.3, 0.5, 0.8][index as usize % 3];
    let e = [2, 5, 10][index as usize / 3 % 3];
    let mut g = rng(1000 + index);
    let n_states = g.random_range(5..=20);
    let n_actions = g.random_range(2..=4);
    let family = garnet_family(n_states, n_actions, gamma, 5, index);
    let report = heterogeneity(&family.kernels()).unwrap();
    let support_ok = check_assumption1(&family.kernels()).holds && report.kappa_max < 1.0;
    let omega = report.kappa_max;
    let oracle = robust_q_star(&family, omega, ORACLE_TOL).unwrap();
    let config = FederationConfig::theorem(Algorithm::Fedrq, omega, e, 100_000);
    let trace = run_federation(&config, &family, Some(&oracle.q_star)).unwrap();
    let (mut violations, mut drift_violations) = (0, 0);
    let (mut worst_gap_ratio, mut worst_drift_ratio) = (0.0f64, 0.0f64);
    let ef = e as f64;
    for r in &trace.records {
        let t = r.t as f64;
        let bound = 16.0 * gamma * (ef - 1.0) / ((1.0 - gamma).powi(3) * (t + ef));
        let gap = r.sup_gap.unwrap_or(f64::INFINITY);
        if gap > bound {
            violations += 1;
        }
        worst_gap_ratio = worst_gap_ratio.max(gap / bound);
        let lr = 2.0 / ((1.0 - gamma) * (t + ef));
        let drift_bound = 4.0 * lr * (ef - 1.0) / (1.0 - gamma);
        if r.drift_mean > drift_bound {
            drift_violations += 1;
        }
        worst_drift_ratio = worst_drift_ratio.max(r.drift_mean / drift_bound);
    }
    TheoremRun {
        gamma,
        sync_interval: e,
        n_states,
        n_actions,
        violations,
        drift_violations,
        final_gap: trace.final_global.sup_distance(&oracle.q_star),
        worst_gap_ratio,
        worst_drift_ratio,
        support_ok,
    }
}

fn criteria_1_2_5() -> [Verdict; 3] {
    let start = Instant::now();
    let runs: Vec<TheoremRun> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..27u64).map(|i| scope.spawn(move || theorem_run(i))).collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let secs = start.elapsed().as_secs_f64();
    let n = runs.len();
    let violations: usize = runs.iter().map(|r| r.violations).sum();
    let support_ok = runs.iter().all(|r| r.support_ok);
    let worst_ratio = runs.iter().map(|r| r.worst_gap_ratio).fold(0.0, f64::max);
    let shapes = runs.iter().all(|r| (5..=20).contains(&r.n_states) && (2..=4).contains(&r.n_actions));
    let c1 = verdict(
        violations == 0 && support_ok && shapes && n >= 20 && secs < RUNTIME_BUDGET_SECS,
        format!(
            "{n} garnet families, {violations} bound violations, worst gap/bound {worst_ratio:.3e}, \
             support and kappa_max < 1 on all: {support_ok}, {secs:.1} s"
        ),
    );
    let slow: Vec<String> = runs
        .iter()
        .filter(|r| r.gamma <= 0.8 && r.final_gap > FINAL_TOL)
        .map(|r| format!("(gamma {}, E {}, gap {:.3e})", r.gamma, r.sync_interval, r.final_gap))
        .collect();
    let worst_final = runs.iter().map(|r| r.final_gap).fold(0.0, f64::max);
    let c2 = verdict(
        slow.is_empty(),
        format!(
            "worst final gap at T = 1e5 is {worst_final:.3e} (tolerance {FINAL_TOL:e}){}",
            if slow.is_empty() { String::new() } else { format!("; over tolerance: {}", slow.join(" ")) }
        ),
    );
    let drift: usize = runs.iter().map(|r| r.drift_violations).sum();
    let worst_drift = runs.iter().map(|r| r.worst_drift_ratio).fold(0.0, f64::max);
    let c5 = verdict(
        drift == 0,
        format!("{drift} drift violations over {n} runs, worst drift/bound {worst_drift:.3e}"),
    );
    [c1, c2, c5]
}

fn slip_family(seed: u64) -> EnvFamily {
    perturb_family(&FamilySpec {
        base: EnvTemplate::Gridworld(GridworldParams::new(4, 4, 0.2, 1.0, 0.8)),
        n_agents: 5,
        perturbation_rate: 0.5,
        seed,
        perturb_param: PerturbParam::SlipProbability,
    })
    .unwrap()
}

fn criterion_3() -> Verdict {
    let families = [slip_family(1), garnet_family(8, 3, 0.8, 5, 2)];
    let mut worst = 0.0f64;
    let mut steps = 0;
    let mut traces_equal = true;
    for family in &families {
        for mode in [Mode::Expected, Mode::Sampled] {
            for min_term in [MinTerm::Exact, MinTerm::Expectile] {
                if mode == Mode::Expected && min_term == MinTerm::Expectile {
                    continue;
                }
                let mut robust = FederationConfig::theorem(Algorithm::Fedrq, 0.0, 10, 5_000);
                robust.mode = mode;
                robust.seed = 17;
                robust.sampled.min_term = min_term;
                let mut plain = robust.clone();
                plain.algorithm = Algorithm::Qavg;
                let mut a = Federation::new(robust.clone(), family).unwrap();
                let mut b = Federation::new(plain.clone(), family).unwrap();
                for _ in 0..robust.total_steps {
                    a.step().unwrap();
                    b.step().unwrap();
                    for (x, y) in a.agents().iter().zip(b.agents()) {
                        worst = worst.max(sup(x.q.values(), y.q.values()));
                    }
                    steps += 1;
                }
                let ta = run_federation(&robust, family, None).unwrap();
                let tb = run_federation(&plain, family, None).unwrap();
                traces_equal &= ta.records.len() == tb.records.len()
                    && ta
                        .records
                        .iter()
                        .zip(&tb.records)
                        .all(|(x, y)| (x.drift_mean - y.drift_mean).abs() <= PARITY_TOL && x.aggregated == y.aggregated)
                    && sup(ta.final_global.values(), tb.final_global.values()) <= PARITY_TOL;
            }
        }
    }
    verdict(
        worst <= PARITY_TOL && traces_equal,
        format!("{steps} compared steps over expected and sampled modes, max entrywise difference {worst:.3e}"),
    )
}

fn criterion_4() -> Verdict {
    let mut g = rng(4);
    let (mut pairs, mut contraction_fail, mut worst_residual, mut worst_avg) = (0, 0, 0.0f64, 0.0f64);
    for seed in 0..10 {
        let ns = g.random_range(5..=12);
        let na = g.random_range(2..=4);
        let gamma = g.random_range(0.3..0.95);
        let family = garnet_family(ns, na, gamma, 5, 40 + seed);
        let omega = heterogeneity(&family.kernels()).unwrap().kappa_max;
        let op = MeanRobustOperator::new(&family, omega).unwrap();
        let nb = compute_neighbors(&average_kernel(&family.kernels()).unwrap());
        for _ in 0..100 {
            let (a, b) = (random_q(ns, na, 10.0, &mut g), random_q(ns, na, 10.0, &mut g));
            let lhs = op.apply(&a).unwrap().sup_distance(&op.apply(&b).unwrap());
            if lhs > op.gamma() * a.sup_distance(&b) + 1e-12 {
                contraction_fail += 1;
            }
            pairs += 1;
            let mean = op.apply(&a).unwrap();
            let mut acc = vec![0.0; ns * na];
            for m in &family.members {
                let tk = robust_bellman_apply(m, &a, omega, &nb).unwrap();
                for (x, y) in acc.iter_mut().zip(tk.values()) {
                    *x += y / family.len() as f64;
                }
            }
            worst_avg = worst_avg.max(sup(mean.values(), &acc));
        }
        worst_residual = worst_residual.max(robust_q_star(&family, omega, ORACLE_TOL).unwrap().residual);
    }
    verdict(
        contraction_fail == 0 && worst_residual <= RESIDUAL_TOL && worst_avg <= AVERAGE_TOL,
        format!(
            "{pairs} pairs, {contraction_fail} contraction failures, worst residual {worst_residual:.3e}, \
             worst |mean operator - average of member operators| {worst_avg:.3e} on {pairs} inputs"
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut g = rng(6);
    let (mut families, mut at_kappa_fail, mut below_fail, mut checked) = (0, 0, 0, 0);
    while families < 100 {
        let ns = g.random_range(3..=8);
        let na = g.random_range(2..=4);
        let fam = random_family(ns, na, 5, &mut g);
        let report = heterogeneity(&fam).unwrap();
        if report.kappa_max >= 1.0 {
            continue;
        }
        families += 1;
        let at = CoveringSpec::from_family(report.kappa_max, &fam).unwrap();
        if !fam.iter().all(|k| membership_check(k, &at).unwrap()) {
            at_kappa_fail += 1;
        }
        if report.kappa_max > 1e-6 {
            checked += 1;
            let below = CoveringSpec::from_family(0.9 * report.kappa_max, &fam).unwrap();
            if fam.iter().all(|k| membership_check(k, &below).unwrap()) {
                below_fail += 1;
            }
        }
    }
    verdict(
        at_kappa_fail == 0 && below_fail == 0,
        format!(
            "{families} families: {at_kappa_fail} rejected at kappa_max, {below_fail} of {checked} still covered at 0.9 kappa_max"
        ),
    )
}

fn random_policy(ns: usize, na: usize, g: &mut rand::rngs::StdRng) -> Policy {
    let rows: Vec<Vec<f64>> = (0..ns)
        .map(|_| {
            let w: Vec<f64> = (0..na).map(|_| g.random_range(0.0..1.0)).collect();
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        })
        .collect();
    Policy::from_rows(&rows).unwrap()
}

fn criterion_7() -> Verdict {
    let mut g = rng(7);
    let (mut worst_greedy, mut worst_excess, mut policies) = (0.0f64, f64::NEG_INFINITY, 0);
    for seed in 0..20 {
        let ns = g.random_range(5..=15);
        let na = g.random_range(2..=4);
        let family = garnet_family(ns, na, g.random_range(0.5..0.95), 5, 70 + seed);
        let omega = heterogeneity(&family.kernels()).unwrap().kappa_max;
        let oracle = robust_q_star(&family, omega, ORACLE_TOL).unwrap();
        let op = MeanRobustOperator::new(&family, omega).unwrap();
        let eval = |pi: &Policy| {
            robust_policy_evaluation(&op.center.kernel, &op.center.reward, pi, omega, &op.neighbors, op.gamma()).unwrap()
        };
        worst_greedy = worst_greedy.max(sup(&eval(&oracle.pi_star), &oracle.v_star));
        for _ in 0..20 {
            let v = eval(&random_policy(ns, na, &mut g));
            for (x, best) in v.iter().zip(&oracle.v_star) {
                worst_excess = worst_excess.max(x - best);
            }
            policies += 1;
        }
    }
    verdict(
        worst_greedy <= VALUE_TOL && worst_excess <= VALUE_TOL,
        format!(
            "20 instances: worst |V(greedy) - V*_R| {worst_greedy:.3e}; {policies} random policies, \
             largest excess over V*_R {worst_excess:.3e}"
        ),
    )
}

fn criterion_8() -> Verdict {
    let mut g = rng(8);
    let h = 1e-5;
    let mut worst_grad = 0.0f64;
    for _ in 0..10_000 {
        let y: f64 = g.random_range(-10.0..10.0);
        let mut x: f64 = g.random_range(-10.0..10.0);
        if (y - x).abs() < 1e-3 {
            x += 0.01;
        }
        let tau = g.random_range(0.001..0.499);
        let fd = (expectile_loss(y, x + h, tau).unwrap() - expectile_loss(y, x - h, tau).unwrap()) / (2.0 * h);
        worst_grad = worst_grad.max((expectile_grad(y, x, tau).unwrap() - fd).abs());
    }
    let mut worst_degree = 0.0f64;
    let mut instances = 0;
    for seed in 0..10 {
        for &(ns, na, gamma) in &[(8, 3, 0.9), (15, 2, 0.8), (20, 4, 0.95)] {
            let mdp = garnet(ns, na, 3, gamma, 500 + seed);
            let mut q = QTable::zeros(ns, na);
            for _ in 0..3000 {
                q = bellman_optimality_apply(&mdp, &q).unwrap();
            }
            let nb = compute_neighbors(&mdp.kernel);
            let buf = balanced_buffer(&nb, 100);
            let fit = fit_degree(&buf, &q, DEFAULT_TAU, DEFAULT_LR, DEFAULT_STEPS, seed).unwrap();
            let exact = exact_degree(&q, &nb).unwrap();
            for (d, e) in fit.table.d.iter().zip(&exact.d) {
                worst_degree = worst_degree.max((d - e).abs() * (1.0 - gamma));
            }
            instances += 1;
        }
    }
    verdict(
        worst_grad <= GRAD_TOL && worst_degree <= DEGREE_TOL,
        format!(
            "worst gradient error {worst_grad:.3e} over 1e4 draws; worst |d - D|(1 - gamma) {worst_degree:.4} \
             on {instances} garnets (tau {DEFAULT_TAU}, lr {DEFAULT_LR}, {DEFAULT_STEPS} steps, 100 samples per neighbor)"
        ),
    )
}

/// Greedy tables agree on the set of maximising actions at every state.
fn same_greedy_sets(a: &QTable, b: &QTable) -> bool {
    let ties = |q: &QTable, s: usize| -> Vec<usize> {
        let row = q.row(s);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..row.len()).filter(|&i| row[i] >= max - 1e-9 * max.abs().max(1.0)).collect()
    };
    (0..a.n_states()).all(|s| ties(a, s) == ties(b, s))
}

struct SeedOutcome {
    seed: u64,
    vacuous: bool,
    exact_same: bool,
    wins: bool,
}

fn compare_seeds(base: &ExperimentConfig, seeds: &[u64], out: &Path) -> Vec<SeedOutcome> {
    let mut cfg = base.clone();
    cfg.evaluation.seeds = Some(seeds.to_vec());
    cfg.output.dir = out.to_path_buf();
    let c: Comparison = compare_algorithms(&cfg).unwrap();
    c.pairs()
        .map(|(r, q)| {
            // re-train to inspect the greedy tables behind the rows
            let mut one = cfg.clone();
            one.apply(&Overrides {
                seed: Some(r.seed),
                ..Overrides::default()
            });
            let resolved = fedrq::experiment::build_family(&one).unwrap();
            let mut tables = Vec::new();
            for algorithm in [Algorithm::Fedrq, Algorithm::Qavg] {
                one.federation.algorithm = algorithm;
                tables.push(fedrq::experiment::train_and_evaluate(&one, &resolved).unwrap().trace.final_global);
            }
            let sweep_ok = match (r.sweep_minimum, q.sweep_minimum) {
                (Some(a), Some(b)) => a >= b - RETURN_TOL,
                _ => false,
            };
            SeedOutcome {
                seed: r.seed,
                vacuous: same_greedy_sets(&tables[0], &tables[1]),
                exact_same: r.same_policy,
                wins: r.minimum >= q.minimum - RETURN_TOL && sweep_ok,
            }
        })
        .collect()
}

fn criterion_9(base: &ExperimentConfig, scratch: &Path) -> Verdict {
    let first = compare_seeds(base, &[1, 2, 3, 4, 5], &scratch.join("c9a"));
    let non_vacuous = first.iter().filter(|o| !o.vacuous).count();
    let describe = |outcomes: &[SeedOutcome]| {
        outcomes
            .iter()
            .map(|o| {
                let kind = match (o.exact_same, o.vacuous) {
                    (true, _) => "same policy",
                    (false, true) => "same up to ties",
                    (false, false) => "distinct",
                };
                format!("seed {} {kind} {}", o.seed, if o.wins { "fedrq>=qavg" } else { "fedrq<qavg" })
            })
            .collect::<Vec<_>>()
            .join("; ")
    };
    if non_vacuous >= 3 {
        let wins = first.iter().filter(|o| o.wins).count();
        return verdict(wins >= 4, format!("{wins} of 5 seeds: {}", describe(&first)));
    }
    let pool: Vec<u64> = (1..=10).collect();
    let all = compare_seeds(base, &pool, &scratch.join("c9b"));
    let counted: Vec<&SeedOutcome> = all.iter().filter(|o| !o.vacuous).collect();
    let wins = counted.iter().filter(|o| o.wins).count();
    let vacuous = all.len() - counted.len();
    if counted.is_empty() {
        return verdict(
            all.iter().all(|o| o.wins),
            format!(
                "vacuous: fewer than 3 of 5 seeds distinct, pool enlarged to 10, all {vacuous} have the same greedy \
                 policy up to ties ({})",
                describe(&all)
            ),
        );
    }
    verdict(
        5 * wins >= 4 * counted.len(),
        format!(
            "pool enlarged to 10: {wins} of {} non-vacuous seeds fedrq>=qavg, {vacuous} vacuous ({})",
            counted.len(),
            describe(&all)
        ),
    )
}

/// Same protocol on a cliff layout, where the two greedy policies differ.
fn cliff_diagnostic(base: &ExperimentConfig, scratch: &Path) -> String {
    let mut cfg = base.clone();
    let mut params = GridworldParams::cliff(5, 3, 0.3, 0.9);
    params.goal_reward = 1.0;
    cfg.environment = fedrq::experiment::EnvironmentConfig::Gridworld(params);
    cfg.evaluation.seeds = Some((1..=5).collect());
    cfg.output.dir = scratch.join("cliff");
    let c = compare_algorithms(&cfg).unwrap();
    let (mut distinct, mut local, mut sweep) = (0, 0, 0);
    for (r, q) in c.pairs() {
        if !r.same_policy {
            distinct += 1;
        }
        if r.minimum >= q.minimum - RETURN_TOL {
            local += 1;
        }
        if r.sweep_minimum.unwrap() >= q.sweep_minimum.unwrap() - RETURN_TOL {
            sweep += 1;
        }
    }
    format!(
        "5x3 cliff, slip 0.3, gamma 0.9: {distinct} of 5 seeds distinct; fedrq>=qavg on local minimum {local}/5, \
         on sweep minimum {sweep}/5; mean minimum fedrq {:.6} qavg {:.6}",
        c.summary[0].minimum, c.summary[1].minimum
    )
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_10(base: &ExperimentConfig, scratch: &Path) -> Verdict {
    let mut variants = Vec::new();
    variants.push(("sample", base.clone()));
    let mut sampled = base.clone();
    sampled.apply(&Overrides {
        mode: Some(Mode::Sampled),
        omega: Some(OmegaSetting::Value(0.3)),
        seed: Some(11),
        ..Overrides::default()
    });
    sampled.federation.total_steps = 30_000;
    variants.push(("sampled", sampled));
    let mut expectile = variants[1].1.clone();
    expectile.federation.sampled.min_term = MinTerm::Expectile;
    variants.push(("sampled-expectile", expectile));
    let mut qavg = base.clone();
    qavg.federation.algorithm = Algorithm::Qavg;
    variants.push(("qavg", qavg));

    let mut files = 0;
    let mut mismatched = Vec::new();
    for (name, mut cfg) in variants {
        let dir = scratch.join(format!("c10-{name}"));
        cfg.output.dir = dir.clone();
        run_experiment(&cfg).unwrap();
        let first = snapshot(&dir);
        let manifest = ExperimentConfig::load(&dir.join("manifest.toml")).unwrap();
        run_experiment(&manifest).unwrap();
        let second = snapshot(&dir);
        files += first.len();
        for (path, bytes) in &first {
            if second.get(path) != Some(bytes) {
                mismatched.push(format!("{name}/{}", path.display()));
            }
        }
        if first.len() != second.len() {
            mismatched.push(format!("{name}: file set changed"));
        }
    }
    verdict(
        mismatched.is_empty(),
        format!("{files} files over 4 runs re-created from their manifests, {} differ {mismatched:?}", mismatched.len()),
    )
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().unwrap();
    let base = sample_config();
    let start = Instant::now();
    let [c1, c2, c5] = criteria_1_2_5();
    let results = [
        ("1", "convergence bound dominance", c1),
        ("2", "convergence to 1e-4 within 1e5 steps", c2),
        ("3", "zero-radius reduction to QAvg", criterion_3()),
        ("4", "contraction and fixed point", criterion_4()),
        ("5", "agent drift bound", c5),
        ("6", "covering-set tightness", criterion_6()),
        ("7", "robust evaluation optimality", criterion_7()),
        ("8", "expectile estimator", criterion_8()),
        ("9", "FedRQ vs QAvg on slip-perturbed gridworlds", criterion_9(&base, scratch.path())),
        ("10", "manifest reruns are byte-identical", criterion_10(&base, scratch.path())),
    ];
    let mut failed = 0;
    for (id, name, v) in &results {
        println!("{} criterion {id:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("INFO criterion  9 cliff variant: {}", cliff_diagnostic(&base, scratch.path()));
    println!("{} of {} criteria passed in {:.1} s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
