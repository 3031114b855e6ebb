//! Config-driven experiments: generate a family, train, verify against the
//! oracle, evaluate, and write every artifact into one directory.
//!
//! A config is a TOML document with the sections `[environment]`,
//! `[family]`, `[federation]`, `[evaluation]` and `[output]`. Every run
//! writes `manifest.toml`, which is itself a valid config and reproduces
//! the run byte for byte.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::covering::{check_assumption1, heterogeneity, HeterogeneityReport};
use crate::envgen::{
    build_gridworld, default_sweep_factors, make_garnet, perturb_family, perturbed_test_suite, EnvFamily,
    EnvTemplate, FamilySpec, GarnetParams, GridworldParams, PerturbParam, PerturbedEnv,
};
use crate::error::{Error, Result};
use crate::fed::{run_federation, Algorithm, FederationConfig, LrSchedule, Mode, SampledConfig, TrainingTrace};
use crate::io::{
    format_float, read_mdp, write_family, write_json, write_qtable, write_returns_csv, write_trace, FamilyManifest,
};
use crate::metrics::{evaluate_on_family, robustness_sweep, sweep_minimum, EvalReport};
use crate::mdp::{greedy_policy, Policy};
use crate::oracle::{robust_q_star, verify_convergence, OracleResult, VerificationReport};

pub const DEFAULT_FINAL_TOL: f64 = 1e-4;
pub const DEFAULT_ORACLE_TOL: f64 = 1e-12;

/// `"auto"` (use `kappa_max` of the generated family) or a fixed value.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum OmegaSetting {
    #[default]
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OmegaRepr {
    Text(String),
    Value(f64),
}

impl Serialize for OmegaSetting {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            OmegaSetting::Auto => OmegaRepr::Text("auto".into()),
            OmegaSetting::Value(v) => OmegaRepr::Value(v),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for OmegaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        match OmegaRepr::deserialize(de)? {
            OmegaRepr::Value(v) => Ok(OmegaSetting::Value(v)),
            OmegaRepr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for OmegaSetting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(OmegaSetting::Auto);
        }
        s.parse::<f64>()
            .map(OmegaSetting::Value)
            .map_err(|_| format!("expected \"auto\" or a number, got {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarnetEnvConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub branching: usize,
    pub gamma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Base action-mixing weight that the family perturbs.
    pub stochasticity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembersConfig {
    /// One MDP document per agent. Relative paths are resolved against the
    /// directory of the config file.
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentConfig {
    Gridworld(GridworldParams),
    Garnet(GarnetEnvConfig),
    /// A family given explicitly as MDP files. No sweep is run.
    Members(MembersConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub n_agents: usize,
    pub perturbation_rate: f64,
    /// Defaults to `slip_probability` for gridworlds and
    /// `action_stochasticity` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_param: Option<PerturbParam>,
    #[serde(default)]
    pub seed: u64,
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    pub algorithm: Algorithm,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub omega: OmegaSetting,
    pub sync_interval: usize,
    pub total_steps: usize,
    #[serde(default)]
    pub schedule: LrSchedule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub sampled: SampledConfig,
}

fn default_final_tol() -> f64 {
    DEFAULT_FINAL_TOL
}

fn default_oracle_tol() -> f64 {
    DEFAULT_ORACLE_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default = "default_sweep_factors")]
    pub sweep_factors: Vec<f64>,
    /// Largest accepted `‖Q̄_T − Q*_R‖_∞` at the end of a run.
    #[serde(default = "default_final_tol")]
    pub final_tol: f64,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
    /// Seeds used by [`compare_algorithms`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            sweep_factors: default_sweep_factors(),
            final_tol: DEFAULT_FINAL_TOL,
            oracle_tol: DEFAULT_ORACLE_TOL,
            seeds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyConfig>,
    pub federation: FederationSection,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// The `[run]` section of a manifest. Ignored on load.
    #[serde(default, skip_serializing)]
    pub run: Option<toml::Table>,
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    /// Replaces both the family and the federation seed.
    pub seed: Option<u64>,
    pub algorithm: Option<Algorithm>,
    pub mode: Option<Mode>,
    pub omega: Option<OmegaSetting>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string().trim_end()))
    }

    /// Reads a config file. Relative member paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        if let EnvironmentConfig::Members(m) = &mut config.environment {
            let base = path.parent().unwrap_or(Path::new(""));
            for p in &mut m.paths {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            if let Some(f) = &mut self.family {
                f.seed = seed;
            }
            self.federation.seed = seed;
        }
        if let Some(a) = o.algorithm {
            self.federation.algorithm = a;
        }
        if let Some(m) = o.mode {
            self.federation.mode = m;
        }
        if let Some(w) = o.omega {
            self.federation.omega = w;
        }
        if let Some(dir) = &o.out {
            self.output.dir = dir.clone();
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match &self.environment {
            EnvironmentConfig::Gridworld(p) => Some(p.gamma),
            EnvironmentConfig::Garnet(g) => Some(g.gamma),
            EnvironmentConfig::Members(_) => None,
        }
    }

    /// Checks everything that can be checked before generating the family.
    pub fn validate(&self) -> Result<()> {
        let f = &self.federation;
        if f.total_steps == 0 {
            return Err(Error::config("federation.total_steps", "must be positive"));
        }
        if let OmegaSetting::Value(w) = f.omega {
            if !(0.0..1.0).contains(&w) {
                return Err(Error::config("federation.omega", format!("{w} is outside [0, 1)")));
            }
        }
        if let Some(gamma) = self.gamma() {
            self.federation_config(0.0).validate(gamma)?;
        }
        match (&self.environment, &self.family) {
            (EnvironmentConfig::Members(m), _) if m.paths.is_empty() => {
                return Err(Error::config("environment.paths", "need at least one member"));
            }
            (EnvironmentConfig::Members(_), _) => {}
            (_, None) => return Err(Error::config("family", "section is required for generated environments")),
            (_, Some(fam)) => {
                if fam.n_agents == 0 {
                    return Err(Error::config("family.n_agents", "need at least one agent"));
                }
                if !(0.0..1.0).contains(&fam.perturbation_rate) {
                    return Err(Error::config(
                        "family.perturbation_rate",
                        format!("{} is outside [0, 1)", fam.perturbation_rate),
                    ));
                }
            }
        }
        let e = &self.evaluation;
        if !(e.final_tol > 0.0) {
            return Err(Error::config("evaluation.final_tol", "must be positive"));
        }
        if !(e.oracle_tol > 0.0) {
            return Err(Error::config("evaluation.oracle_tol", "must be positive"));
        }
        if e.sweep_factors.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::config("evaluation.sweep_factors", "factors must be finite and non-negative"));
        }
        Ok(())
    }

    fn federation_config(&self, omega: f64) -> FederationConfig {
        let f = &self.federation;
        FederationConfig {
            sync_interval: f.sync_interval,
            total_steps: f.total_steps,
            algorithm: f.algorithm,
            mode: f.mode,
            omega,
            lr_schedule: f.schedule,
            seed: f.seed,
            sampled: f.sampled,
            record_every: f.record_every,
            keep_snapshots: false,
        }
    }

    fn perturb_param(&self) -> PerturbParam {
        match (&self.family, &self.environment) {
            (Some(FamilyConfig { perturb_param: Some(p), .. }), _) => *p,
            (_, EnvironmentConfig::Gridworld(_)) => PerturbParam::SlipProbability,
            _ => PerturbParam::ActionStochasticity,
        }
    }

    fn template(&self) -> Result<Option<EnvTemplate>> {
        Ok(match &self.environment {
            EnvironmentConfig::Gridworld(p) => {
                build_gridworld(p).map_err(|e| Error::config("environment", e.to_string()))?;
                Some(EnvTemplate::Gridworld(p.clone()))
            }
            EnvironmentConfig::Garnet(g) => {
                let mdp = make_garnet(&GarnetParams {
                    n_states: g.n_states,
                    n_actions: g.n_actions,
                    branching: g.branching,
                    gamma: g.gamma,
                    seed: g.seed,
                })
                .map_err(|e| Error::config("environment", e.to_string()))?;
                Some(EnvTemplate::Tabular {
                    mdp,
                    stochasticity: g.stochasticity,
                })
            }
            EnvironmentConfig::Members(_) => None,
        })
    }
}

/// The family of a config together with what is needed to sweep it.
#[derive(Debug, Clone)]
pub struct ResolvedFamily {
    pub family: EnvFamily,
    pub template: Option<EnvTemplate>,
    pub perturb_param: PerturbParam,
    pub heterogeneity: HeterogeneityReport,
}

pub fn build_family(config: &ExperimentConfig) -> Result<ResolvedFamily> {
    let perturb_param = config.perturb_param();
    let template = config.template()?;
    let family = match (&template, &config.environment, &config.family) {
        (Some(base), _, Some(f)) => {
            base.param(perturb_param)?;
            perturb_family(&FamilySpec {
                base: base.clone(),
                n_agents: f.n_agents,
                perturbation_rate: f.perturbation_rate,
                seed: f.seed,
                perturb_param,
            })
            .map_err(|e| match e {
                Error::InvalidParameter { name, reason, .. } => Error::config(format!("family.{name}"), reason),
                other => other,
            })?
        }
        (None, EnvironmentConfig::Members(m), _) => {
            let members = m.paths.iter().map(|p| read_mdp(p)).collect::<Result<Vec<_>>>()?;
            EnvFamily::from_members(members)?
        }
        _ => return Err(Error::config("family", "section is required for generated environments")),
    };
    let heterogeneity = heterogeneity(&family.kernels())?;
    Ok(ResolvedFamily {
        family,
        template,
        perturb_param,
        heterogeneity,
    })
}

/// The `ω` a run uses: zero for QAvg, otherwise the configured value or
/// `kappa_max`. FedRQ aborts when no covering set contains the family.
pub fn resolve_omega(setting: OmegaSetting, algorithm: Algorithm, report: &HeterogeneityReport) -> Result<f64> {
    if algorithm == Algorithm::Qavg {
        return Ok(0.0);
    }
    if !report.feasible {
        return Err(Error::InfeasibleCovering {
            kappa_max: report.kappa_max,
        });
    }
    Ok(match setting {
        OmegaSetting::Auto => report.kappa_max,
        OmegaSetting::Value(w) => w,
    })
}

/// A trained federation evaluated on its family and on the sweep.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub omega: f64,
    pub trace: TrainingTrace,
    pub oracle: OracleResult,
    pub policy: Policy,
    pub eval: EvalReport,
    pub sweep: Option<Vec<(f64, f64)>>,
}

impl Outcome {
    pub fn final_gap(&self) -> f64 {
        self.trace.final_global.sup_distance(&self.oracle.q_star)
    }

    pub fn sweep_minimum(&self) -> Option<f64> {
        self.sweep.as_deref().map(sweep_minimum)
    }
}

fn sweep_suite(config: &ExperimentConfig, resolved: &ResolvedFamily) -> Result<Option<Vec<PerturbedEnv>>> {
    match &resolved.template {
        Some(t) if !config.evaluation.sweep_factors.is_empty() => {
            perturbed_test_suite(t, resolved.perturb_param, &config.evaluation.sweep_factors)
                .map(Some)
                .map_err(|e| Error::config("evaluation.sweep_factors", e.to_string()))
        }
        _ => Ok(None),
    }
}

/// Trains one federation on `resolved` and evaluates its greedy policy.
pub fn train_and_evaluate(config: &ExperimentConfig, resolved: &ResolvedFamily) -> Result<Outcome> {
    let omega = resolve_omega(config.federation.omega, config.federation.algorithm, &resolved.heterogeneity)?;
    let family = &resolved.family;
    let fed_config = config.federation_config(omega);
    fed_config.validate(family.gamma())?;
    let oracle = robust_q_star(family, omega, config.evaluation.oracle_tol)?;
    let trace = run_federation(&fed_config, family, Some(&oracle.q_star))?;
    let policy = greedy_policy(&trace.final_global);
    let eval = evaluate_on_family(&policy, family)?;
    let sweep = match sweep_suite(config, resolved)? {
        Some(suite) => Some(robustness_sweep(&policy, &suite)?),
        None => None,
    };
    Ok(Outcome {
        omega,
        trace,
        oracle,
        policy,
        eval,
        sweep,
    })
}

/// Run facts recorded in the manifest. Floats are stored as 17-digit
/// strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub version: String,
    pub family_seed: Option<u64>,
    pub federation_seed: u64,
    pub omega: String,
    pub kappa_max: String,
    pub feasible: bool,
    pub perturbation_factors: Vec<String>,
    pub member_params: Vec<String>,
    pub clamped: Vec<bool>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    config: &'a ExperimentConfig,
    run: RunInfo,
}

#[derive(Serialize)]
struct HeterogeneityDocument<'a> {
    #[serde(flatten)]
    report: &'a HeterogeneityReport,
    omega: f64,
    assumption1: bool,
    violating_states: Vec<usize>,
}

#[derive(Serialize)]
struct EvaluationDocument {
    average: f64,
    minimum: f64,
    argmin: usize,
    sweep_minimum: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub omega: f64,
    pub heterogeneity: HeterogeneityReport,
    pub outcome: Outcome,
    /// Present in expected mode with the theorem schedule.
    pub verification: Option<VerificationReport>,
}

impl RunSummary {
    /// False only when a verification ran and failed.
    pub fn passed(&self) -> bool {
        self.verification.as_ref().is_none_or(|v| v.pass)
    }
}

/// Runs one experiment and writes its artifacts to `config.output.dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let resolved = build_family(config)?;
    let outcome = train_and_evaluate(config, &resolved)?;
    let family = &resolved.family;
    let verification = if config.federation_config(outcome.omega).is_theorem_mode() {
        Some(verify_convergence(
            &outcome.trace,
            &outcome.oracle,
            family.gamma(),
            config.federation.sync_interval,
            config.evaluation.final_tol,
        )?)
    } else {
        None
    };

    let dir = &config.output.dir;
    fs::create_dir_all(dir)?;
    let mut manifest_config = config.clone();
    if let EnvironmentConfig::Members(m) = &mut manifest_config.environment {
        for p in &mut m.paths {
            *p = fs::canonicalize(&*p)?;
        }
    }
    let run = RunInfo {
        version: env!("CARGO_PKG_VERSION").into(),
        family_seed: config.family.as_ref().map(|f| f.seed),
        federation_seed: config.federation.seed,
        omega: format_float(outcome.omega),
        kappa_max: format_float(resolved.heterogeneity.kappa_max),
        feasible: resolved.heterogeneity.feasible,
        perturbation_factors: family.factors.iter().map(|&x| format_float(x)).collect(),
        member_params: family
            .params
            .iter()
            .map(|p| p.map_or_else(|| "none".into(), format_float))
            .collect(),
        clamped: family.clamped.clone(),
    };
    let manifest = toml::to_string(&Manifest {
        config: &manifest_config,
        run,
    })?;
    fs::write(dir.join("manifest.toml"), manifest)?;

    let support = check_assumption1(&family.kernels());
    write_json(
        &dir.join("heterogeneity.json"),
        &HeterogeneityDocument {
            report: &resolved.heterogeneity,
            omega: outcome.omega,
            assumption1: support.holds,
            violating_states: support.violating_states,
        },
    )?;
    let fam_cfg = config.family.as_ref();
    write_family(
        &dir.join("family"),
        family,
        &FamilyManifest {
            seed: fam_cfg.map_or(0, |f| f.seed),
            perturbation_rate: fam_cfg.map_or(0.0, |f| f.perturbation_rate),
            perturb_param: resolved.perturb_param,
            n_agents: family.len(),
            factors: family.factors.clone(),
            params: family.params.clone(),
            clamped: family.clamped.clone(),
        },
    )?;
    write_trace(File::create(dir.join("trace.jsonl"))?, &outcome.trace)?;
    write_qtable(&dir.join("global_q.json"), &outcome.trace.final_global)?;
    write_json(&dir.join("oracle.json"), &outcome.oracle)?;
    match &verification {
        Some(v) => write_json(&dir.join("verification.json"), v)?,
        None => remove_if_present(&dir.join("verification.json"))?,
    }
    let rows: Vec<(String, f64)> = outcome
        .eval
        .returns
        .iter()
        .enumerate()
        .map(|(k, &r)| (k.to_string(), r))
        .collect();
    write_returns_csv(&dir.join("eval_family.csv"), "env_index", &rows)?;
    match &outcome.sweep {
        Some(sweep) => {
            let rows: Vec<(String, f64)> = sweep.iter().map(|&(f, r)| (format_float(f), r)).collect();
            write_returns_csv(&dir.join("eval_sweep.csv"), "factor", &rows)?;
        }
        None => remove_if_present(&dir.join("eval_sweep.csv"))?,
    }
    write_json(
        &dir.join("evaluation.json"),
        &EvaluationDocument {
            average: outcome.eval.average,
            minimum: outcome.eval.minimum,
            argmin: outcome.eval.argmin,
            sweep_minimum: outcome.sweep_minimum(),
        },
    )?;

    Ok(RunSummary {
        out_dir: dir.clone(),
        omega: outcome.omega,
        heterogeneity: resolved.heterogeneity,
        outcome,
        verification,
    })
}

fn remove_if_present(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub omega: f64,
    pub average: f64,
    pub minimum: f64,
    pub sweep_minimum: Option<f64>,
    pub final_gap: f64,
    /// Whether both algorithms ended with the same greedy policy.
    pub same_policy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub average: f64,
    pub minimum: f64,
    pub sweep_minimum: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// FedRQ then QAvg for every seed, in seed order.
    pub rows: Vec<ComparisonRow>,
    pub summary: Vec<SummaryRow>,
}

impl Comparison {
    /// `(fedrq, qavg)` row pairs per seed.
    pub fn pairs(&self) -> impl Iterator<Item = (&ComparisonRow, &ComparisonRow)> {
        self.rows.chunks(2).map(|c| (&c[0], &c[1]))
    }
}

/// Trains FedRQ and QAvg on the family of every seed in
/// `evaluation.seeds` and writes `comparison.csv` to the output directory.
///
/// Each seed replaces both the family and the federation seed.
pub fn compare_algorithms(config: &ExperimentConfig) -> Result<Comparison> {
    config.validate()?;
    let seeds = match &config.evaluation.seeds {
        Some(s) if !s.is_empty() => s.clone(),
        _ => return Err(Error::config("evaluation.seeds", "comparison needs a non-empty seed list")),
    };
    let mut rows = Vec::with_capacity(2 * seeds.len());
    for &seed in &seeds {
        let mut cfg = config.clone();
        cfg.apply(&Overrides {
            seed: Some(seed),
            ..Overrides::default()
        });
        let resolved = build_family(&cfg)?;
        let mut outcomes = Vec::with_capacity(2);
        for algorithm in [Algorithm::Fedrq, Algorithm::Qavg] {
            cfg.federation.algorithm = algorithm;
            outcomes.push((algorithm, train_and_evaluate(&cfg, &resolved)?));
        }
        let same_policy = outcomes[0].1.policy == outcomes[1].1.policy;
        for (algorithm, o) in outcomes {
            rows.push(ComparisonRow {
                seed,
                algorithm,
                omega: o.omega,
                average: o.eval.average,
                minimum: o.eval.minimum,
                sweep_minimum: o.sweep_minimum(),
                final_gap: o.final_gap(),
                same_policy,
            });
        }
    }
    let n = seeds.len() as f64;
    let summary = [Algorithm::Fedrq, Algorithm::Qavg]
        .into_iter()
        .map(|algorithm| {
            let mine: Vec<&ComparisonRow> = rows.iter().filter(|r| r.algorithm == algorithm).collect();
            let mean = |f: &dyn Fn(&ComparisonRow) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / n;
            SummaryRow {
                algorithm,
                average: mean(&|r| r.average),
                minimum: mean(&|r| r.minimum),
                sweep_minimum: mine
                    .iter()
                    .map(|r| r.sweep_minimum)
                    .sum::<Option<f64>>()
                    .map(|s| s / n),
            }
        })
        .collect();
    let comparison = Comparison { rows, summary };
    fs::create_dir_all(&config.output.dir)?;
    write_comparison_csv(&config.output.dir.join("comparison.csv"), &comparison)?;
    Ok(comparison)
}

fn opt_float(x: Option<f64>) -> String {
    x.map_or_else(String::new, format_float)
}

pub fn write_comparison_csv(path: &Path, c: &Comparison) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "seed",
        "algorithm",
        "omega",
        "average",
        "minimum",
        "sweep_minimum",
        "final_gap",
        "same_policy",
    ])?;
    for r in &c.rows {
        w.write_record([
            r.seed.to_string(),
            r.algorithm.to_string(),
            format_float(r.omega),
            format_float(r.average),
            format_float(r.minimum),
            opt_float(r.sweep_minimum),
            format_float(r.final_gap),
            r.same_policy.to_string(),
        ])?;
    }
    for s in &c.summary {
        w.write_record([
            "mean".to_string(),
            s.algorithm.to_string(),
            String::new(),
            format_float(s.average),
            format_float(s.minimum),
            opt_float(s.sweep_minimum),
            String::new(),
            String::new(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
