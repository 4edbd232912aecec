//! Monte Carlo trials, scaling sweeps, log-log fits and result files.
//!
//! Trials are independent: trial `t` of row `n` gets its own hidden
//! permutation and its own reward streams, both derived from
//! `(master_seed, n, t)`. Results are collected in trial order, so the
//! aggregate does not depend on how many workers ran them.
//!
//! CSV columns, in order:
//!
//! ```text
//! n,trials,counted,successes,success_rate,mean_pulls,stddev_pulls,total_pulls,
//! overflows,phase_caps,best_eliminated,max_phase,hardness_h,hardness_g,
//! lower_bound,lower_bound_in_range
//! ```
//!
//! Floats are written with 17 significant digits (`{:.16e}`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baseline::{self, BaselineError};
use crate::env::{parse_family, Bandit, BanditInstance, EnvError, EnvironmentHandle, Family};
use crate::melim::DEFAULT_PULL_CAP;
use crate::metrics::{self, MetricsError};
use crate::prism::{self, PhaseLog, PrismConfig, PrismError, Termination, Variant, DEFAULT_PHASE_CAP};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Prism(#[from] PrismError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("fit needs at least two points with distinct positive x and positive y")]
    DegenerateFit,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// True when the error stems from bad user input rather than a failure
    /// during execution.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            HarnessError::Spec(_)
                | HarnessError::Env(_)
                | HarnessError::Metrics(_)
                | HarnessError::Prism(PrismError::BadDelta { .. })
                | HarnessError::Baseline(BaselineError::BadDelta(_) | BaselineError::ZeroBudget)
                | HarnessError::Json(_)
        )
    }
}

fn spec_err<T>(msg: impl Into<String>) -> Result<T, HarnessError> {
    Err(HarnessError::Spec(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    PrismStandard,
    PrismConservative,
    Uniform,
}

impl Algorithm {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        match text.trim().to_ascii_lowercase().as_str() {
            "prism" | "prism_standard" | "standard" => Ok(Algorithm::PrismStandard),
            "conservative" | "prism_conservative" => Ok(Algorithm::PrismConservative),
            "uniform" => Ok(Algorithm::Uniform),
            other => spec_err(format!("unknown algorithm {other:?}")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PrismStandard => "prism_standard",
            Algorithm::PrismConservative => "prism_conservative",
            Algorithm::Uniform => "uniform",
        }
    }

    fn variant(self) -> Option<Variant> {
        match self {
            Algorithm::PrismStandard => Some(Variant::Standard),
            Algorithm::PrismConservative => Some(Variant::Conservative),
            Algorithm::Uniform => None,
        }
    }
}

/// Per-arm budget of the uniform baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetRule {
    Fixed(u64),
    /// `sufficient_m(gaps, delta)` computed from the true instance.
    Sufficient,
}

impl BudgetRule {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let text = text.trim();
        if text.eq_ignore_ascii_case("sufficient") {
            return Ok(BudgetRule::Sufficient);
        }
        match text.parse::<u64>() {
            Ok(m) if m >= 1 => Ok(BudgetRule::Fixed(m)),
            _ => spec_err(format!("m must be a positive integer or 'sufficient', got {text:?}")),
        }
    }
}

/// Everything an algorithm needs to run one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlgorithmConfig {
    pub algorithm: Algorithm,
    pub delta: f64,
    pub budget: BudgetRule,
    pub phase_cap: u32,
    pub pull_cap: u64,
}

impl AlgorithmConfig {
    pub fn new(algorithm: Algorithm, delta: f64) -> Self {
        Self {
            algorithm,
            delta,
            budget: BudgetRule::Sufficient,
            phase_cap: DEFAULT_PHASE_CAP,
            pull_cap: DEFAULT_PULL_CAP,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match self.algorithm.variant() {
            Some(variant) => {
                PrismConfig::new(self.delta, variant)?;
            }
            None => {
                if !(self.delta > 0.0 && self.delta < 1.0) {
                    return spec_err(format!("delta must lie in (0, 1), got {}", self.delta));
                }
            }
        }
        if self.phase_cap == 0 {
            return spec_err("phase_cap must be positive");
        }
        Ok(())
    }
}

/// One trial, including the phase trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub algorithm: Algorithm,
    pub trial_id: u64,
    pub chosen: usize,
    pub correct: bool,
    pub total_pulls: u64,
    pub termination: Termination,
    pub final_phase: u32,
    pub best_eliminated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overflow: Option<prism::OverflowInfo>,
    pub phases: Vec<PhaseLog>,
}

/// Runs one trial of `config` on `instance` as given (no reshuffling).
pub fn run_trial(
    instance: &BanditInstance,
    config: &AlgorithmConfig,
    master_seed: u64,
    trial_id: u64,
) -> Result<TrialResult, HarnessError> {
    config.validate()?;
    let best = instance.best_arm();
    let mut env = EnvironmentHandle::new(instance.clone(), master_seed, trial_id);
    let result = match config.algorithm.variant() {
        Some(variant) => {
            let cfg = PrismConfig::new(config.delta, variant)?
                .phase_cap(config.phase_cap)
                .pull_cap(config.pull_cap);
            let run = prism::prism(&mut env, &cfg)?;
            TrialResult {
                algorithm: config.algorithm,
                trial_id,
                chosen: run.chosen,
                correct: run.chosen == best,
                total_pulls: run.total_pulls,
                termination: run.termination,
                final_phase: run.final_phase(),
                best_eliminated: run.eliminated(best),
                overflow: run.overflow,
                phases: run.phases,
            }
        }
        None => uniform_trial(&mut env, config, trial_id)?,
    };
    debug_assert_eq!(result.total_pulls, env.total_pulls());
    Ok(result)
}

fn uniform_trial(
    env: &mut EnvironmentHandle,
    config: &AlgorithmConfig,
    trial_id: u64,
) -> Result<TrialResult, HarnessError> {
    let instance = env.instance().clone();
    let best = instance.best_arm();
    let m = match config.budget {
        BudgetRule::Fixed(m) => m,
        BudgetRule::Sufficient if instance.n_arms() == 1 => 1,
        BudgetRule::Sufficient => baseline::sufficient_m(&metrics::gaps(&instance)?, config.delta)?,
    };
    let all: Vec<usize> = (0..instance.n_arms()).collect();
    let overflow_result = |detail: String, env: &EnvironmentHandle| TrialResult {
        algorithm: config.algorithm,
        trial_id,
        chosen: 0,
        correct: best == 0,
        total_pulls: env.total_pulls(),
        termination: Termination::Overflow,
        final_phase: 0,
        best_eliminated: false,
        overflow: Some(prism::OverflowInfo {
            phase: 1,
            active: all.len(),
            detail,
        }),
        phases: Vec::new(),
    };
    if m > config.pull_cap {
        let detail = format!("{m} pulls per arm requested, above the cap of {}", config.pull_cap);
        return Ok(overflow_result(detail, env));
    }
    let out = match baseline::uniform_best(env, m) {
        Ok(out) => out,
        Err(e @ (BaselineError::BudgetOverflow { .. } | BaselineError::Env(EnvError::LedgerOverflow { .. }))) => {
            return Ok(overflow_result(e.to_string(), env));
        }
        Err(e) => return Err(e.into()),
    };
    let phase_means: BTreeMap<usize, f64> = out.means.iter().copied().enumerate().collect();
    let phase = PhaseLog {
        phase: 1,
        active_before: all,
        me_output: out.chosen,
        n_ell: m,
        eps_ell: 0.0,
        me_delta: 0.0,
        me_pulls: 0,
        threshold: out.means[out.chosen],
        active_after: vec![out.chosen],
        phase_means,
        pulls_phase: out.total_pulls,
    };
    Ok(TrialResult {
        algorithm: config.algorithm,
        trial_id,
        chosen: out.chosen,
        correct: out.chosen == best,
        total_pulls: out.total_pulls,
        termination: Termination::UniqueSurvivor,
        final_phase: 1,
        best_eliminated: out.chosen != best,
        overflow: None,
        phases: vec![phase],
    })
}

/// Compact per-trial record kept by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialSummary {
    pub trial_id: u64,
    pub chosen: usize,
    pub correct: bool,
    pub total_pulls: u64,
    pub termination: Termination,
    pub final_phase: u32,
    pub best_eliminated: bool,
}

impl From<&TrialResult> for TrialSummary {
    fn from(r: &TrialResult) -> Self {
        Self {
            trial_id: r.trial_id,
            chosen: r.chosen,
            correct: r.correct,
            total_pulls: r.total_pulls,
            termination: r.termination,
            final_phase: r.final_phase,
            best_eliminated: r.best_eliminated,
        }
    }
}

/// How the alpha-family instance of each row is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceRecipe {
    pub alpha: f64,
    pub mu0: f64,
    pub gap_scale: f64,
    pub family: Family,
}

impl InstanceRecipe {
    pub fn build(&self, n: usize) -> Result<BanditInstance, HarnessError> {
        Ok(BanditInstance::alpha(n, self.alpha, self.mu0, self.gap_scale, self.family)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub recipe: InstanceRecipe,
    /// Suboptimal-arm counts, one row each.
    pub n_values: Vec<usize>,
    pub config: AlgorithmConfig,
    pub trials: u64,
    pub master_seed: u64,
    /// Worker threads; 1 runs sequentially, 0 uses every core.
    pub jobs: usize,
    /// Hide the best arm behind a fresh permutation in every trial.
    pub shuffle: bool,
}

impl ExperimentSpec {
    pub fn new(recipe: InstanceRecipe, n_values: Vec<usize>, config: AlgorithmConfig) -> Self {
        Self {
            recipe,
            n_values,
            config,
            trials: 100,
            master_seed: 0,
            jobs: 1,
            shuffle: true,
        }
    }

    pub fn trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return spec_err("trials must be at least 1");
        }
        if self.n_values.is_empty() {
            return spec_err("at least one n is required");
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return spec_err("n values must be strictly increasing");
        }
        self.config.validate()?;
        self.recipe.build(1)?;
        Ok(())
    }

    /// Parses the key-value spec format: one `key = value` per line, `#`
    /// starts a comment. Keys: `alpha`, `n` (comma separated), `mu0`,
    /// `gap_scale`, `family`, `sigma`, `alg`, `delta`, `m`, `trials`,
    /// `seed`, `jobs`, `phase_cap`, `pull_cap`, `shuffle`.
    pub fn from_kv_text(text: &str) -> Result<Self, HarnessError> {
        Self::from_pairs(&parse_kv_pairs(text)?)
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, HarnessError> {
        const KNOWN: [&str; 15] = [
            "alpha", "n", "mu0", "gap_scale", "family", "sigma", "alg", "delta", "m", "trials",
            "seed", "jobs", "phase_cap", "pull_cap", "shuffle",
        ];
        if let Some(key) = pairs.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return spec_err(format!("unknown key {key:?}"));
        }
        fn num<T: std::str::FromStr>(
            pairs: &BTreeMap<String, String>,
            key: &str,
            default: Option<T>,
        ) -> Result<T, HarnessError> {
            match pairs.get(key) {
                Some(v) => v
                    .parse()
                    .or_else(|_| spec_err(format!("{key}: cannot parse {v:?}"))),
                None => default.map_or_else(|| spec_err(format!("missing key {key:?}")), Ok),
            }
        }
        let n_values = match pairs.get("n") {
            Some(list) => list
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .or_else(|_| spec_err(format!("n: cannot parse {list:?}")))?,
            None => return spec_err("missing key \"n\""),
        };
        let sigma = pairs
            .get("sigma")
            .map(|s| s.parse::<f64>())
            .transpose()
            .or_else(|_| spec_err("sigma: not a number"))?;
        let family = parse_family(pairs.get("family").map_or("gaussian", String::as_str), sigma)?;
        let recipe = InstanceRecipe {
            alpha: num(pairs, "alpha", None)?,
            mu0: num(pairs, "mu0", Some(0.9))?,
            gap_scale: num(pairs, "gap_scale", Some(0.5))?,
            family,
        };
        let config = AlgorithmConfig {
            algorithm: Algorithm::parse(pairs.get("alg").map_or("prism_standard", String::as_str))?,
            delta: num(pairs, "delta", Some(0.1))?,
            budget: BudgetRule::parse(pairs.get("m").map_or("sufficient", String::as_str))?,
            phase_cap: num(pairs, "phase_cap", Some(DEFAULT_PHASE_CAP))?,
            pull_cap: num(pairs, "pull_cap", Some(DEFAULT_PULL_CAP))?,
        };
        let spec = Self {
            recipe,
            n_values,
            config,
            trials: num(pairs, "trials", Some(100))?,
            master_seed: num(pairs, "seed", Some(0))?,
            jobs: num(pairs, "jobs", Some(1))?,
            shuffle: num(pairs, "shuffle", Some(true))?,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The spec in the key-value format accepted by [`Self::from_kv_text`].
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        let n_list: Vec<String> = self.n_values.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "alpha = {}", self.recipe.alpha);
        let _ = writeln!(out, "n = {}", n_list.join(","));
        let _ = writeln!(out, "mu0 = {}", self.recipe.mu0);
        let _ = writeln!(out, "gap_scale = {}", self.recipe.gap_scale);
        let _ = writeln!(out, "family = {}", self.recipe.family.name());
        if let Family::Gaussian { sigma } = self.recipe.family {
            let _ = writeln!(out, "sigma = {sigma}");
        }
        let _ = writeln!(out, "alg = {}", self.config.algorithm.name());
        let _ = writeln!(out, "delta = {}", self.config.delta);
        match self.config.budget {
            BudgetRule::Fixed(m) => {
                let _ = writeln!(out, "m = {m}");
            }
            BudgetRule::Sufficient => out.push_str("m = sufficient\n"),
        }
        let _ = writeln!(out, "trials = {}", self.trials);
        let _ = writeln!(out, "seed = {}", self.master_seed);
        let _ = writeln!(out, "jobs = {}", self.jobs);
        let _ = writeln!(out, "phase_cap = {}", self.config.phase_cap);
        let _ = writeln!(out, "pull_cap = {}", self.config.pull_cap);
        let _ = writeln!(out, "shuffle = {}", self.shuffle);
        out
    }
}

/// Splits key-value text into pairs; later keys win, `-` in keys reads as `_`.
pub fn parse_kv_pairs(text: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut pairs = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return spec_err(format!("line {}: expected key = value", lineno + 1));
        };
        pairs.insert(key.trim().replace('-', "_"), value.trim().to_string());
    }
    Ok(pairs)
}

/// SplitMix64 finaliser folded over `parts`.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        let mut z = state ^ p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}

/// Runs `f(0..trials)` and returns results in trial order.
fn execute<T, F>(trials: u64, jobs: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if jobs != 1 {
        use rayon::prelude::*;
        let run = || (0..trials).into_par_iter().map(&f).collect();
        return match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        };
    }
    let _ = jobs;
    (0..trials).map(f).collect()
}

/// One row of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub n: usize,
    pub trials: u64,
    /// Trials that did not overflow; means are taken over these.
    pub counted: u64,
    pub successes: u64,
    pub success_rate: f64,
    pub mean_pulls: f64,
    pub stddev_pulls: f64,
    pub total_pulls: u64,
    pub overflows: u64,
    pub phase_caps: u64,
    pub best_eliminated: u64,
    pub max_phase: u32,
    pub hardness_h: f64,
    pub hardness_g: f64,
    pub lower_bound: f64,
    pub lower_bound_in_range: bool,
}

/// Runs every trial of the row with `n` suboptimal arms.
pub fn run_trials(spec: &ExperimentSpec, n: usize) -> Result<AggregateRow, HarnessError> {
    let summaries = collect_trials(spec, n)?;
    aggregate(spec, n, &summaries)
}

/// Per-trial summaries for row `n`, in trial order.
pub fn collect_trials(spec: &ExperimentSpec, n: usize) -> Result<Vec<TrialSummary>, HarnessError> {
    spec.validate()?;
    let base = spec.recipe.build(n)?;
    let row_seed = derive_seed(&[spec.master_seed, n as u64]);
    let results = execute(spec.trials, spec.jobs, |t| {
        let instance = if spec.shuffle {
            base.shuffled(derive_seed(&[row_seed, t]))
        } else {
            base.clone()
        };
        run_trial(&instance, &spec.config, row_seed, t).map(|r| TrialSummary::from(&r))
    });
    results.into_iter().collect()
}

fn aggregate(spec: &ExperimentSpec, n: usize, trials: &[TrialSummary]) -> Result<AggregateRow, HarnessError> {
    let counted: Vec<&TrialSummary> = trials
        .iter()
        .filter(|t| t.termination != Termination::Overflow)
        .collect();
    let count = counted.len() as u64;
    let total_pulls = counted
        .iter()
        .try_fold(0u64, |acc, t| acc.checked_add(t.total_pulls))
        .ok_or_else(|| HarnessError::Spec("summed pulls overflow u64".into()))?;
    let successes = counted.iter().filter(|t| t.correct).count() as u64;
    let (mean, stddev) = if count == 0 {
        (0.0, 0.0)
    } else {
        let mean = total_pulls as f64 / count as f64;
        let stddev = if count > 1 {
            let ss = metrics::compensated_sum(counted.iter().map(|t| (t.total_pulls as f64 - mean).powi(2)));
            (ss / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        (mean, stddev)
    };
    let instance = spec.recipe.build(n)?;
    let gaps = metrics::gaps(&instance)?;
    let h = metrics::hardness_h(&gaps)?;
    let g = metrics::hardness_g(&gaps)?;
    let bound = match spec.config.algorithm {
        Algorithm::Uniform => metrics::alpha_lb(n, spec.recipe.alpha, spec.config.delta)?,
        _ => metrics::adaptive_lb(h, spec.config.delta, 1.0),
    };
    Ok(AggregateRow {
        n,
        trials: trials.len() as u64,
        counted: count,
        successes,
        success_rate: if count == 0 { 0.0 } else { successes as f64 / count as f64 },
        mean_pulls: mean,
        stddev_pulls: stddev,
        total_pulls,
        overflows: trials.len() as u64 - count,
        phase_caps: trials.iter().filter(|t| t.termination == Termination::PhaseCap).count() as u64,
        best_eliminated: trials.iter().filter(|t| t.best_eliminated).count() as u64,
        max_phase: trials.iter().map(|t| t.final_phase).max().unwrap_or(0),
        hardness_h: h,
        hardness_g: g,
        lower_bound: bound.value,
        lower_bound_in_range: bound.in_range,
    })
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit, HarnessError> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(HarnessError::DegenerateFit);
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(HarnessError::DegenerateFit);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateResult {
    pub rows: Vec<AggregateRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<LogLogFit>,
}

impl AggregateResult {
    fn fit_rows(rows: &[AggregateRow]) -> Result<LogLogFit, HarnessError> {
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.mean_pulls)).collect();
        fit_loglog_slope(&points)
    }
}

/// One row per `n`, without a fit.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<AggregateResult, HarnessError> {
    spec.validate()?;
    let rows = spec
        .n_values
        .iter()
        .map(|&n| run_trials(spec, n))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AggregateResult { rows, fit: None })
}

/// One row per `n` plus the log-log slope of mean pulls against `n`.
/// Needs at least four values of `n` spanning two octaves.
pub fn scaling_sweep(spec: &ExperimentSpec) -> Result<AggregateResult, HarnessError> {
    spec.validate()?;
    let ns = &spec.n_values;
    if ns.len() < 4 {
        return spec_err("a sweep needs at least four values of n");
    }
    if ns[ns.len() - 1] < 4 * ns[0] {
        return spec_err("a sweep must span at least two octaves of n");
    }
    let mut result = run_experiment(spec)?;
    result.fit = Some(AggregateResult::fit_rows(&result.rows)?);
    Ok(result)
}

pub const CSV_HEADER: [&str; 16] = [
    "n",
    "trials",
    "counted",
    "successes",
    "success_rate",
    "mean_pulls",
    "stddev_pulls",
    "total_pulls",
    "overflows",
    "phase_caps",
    "best_eliminated",
    "max_phase",
    "hardness_h",
    "hardness_g",
    "lower_bound",
    "lower_bound_in_range",
];

fn float17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv<W: io::Write>(rows: &[AggregateRow], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER)?;
    for r in rows {
        writer.write_record([
            r.n.to_string(),
            r.trials.to_string(),
            r.counted.to_string(),
            r.successes.to_string(),
            float17(r.success_rate),
            float17(r.mean_pulls),
            float17(r.stddev_pulls),
            r.total_pulls.to_string(),
            r.overflows.to_string(),
            r.phase_caps.to_string(),
            r.best_eliminated.to_string(),
            r.max_phase.to_string(),
            float17(r.hardness_h),
            float17(r.hardness_g),
            float17(r.lower_bound),
            r.lower_bound_in_range.to_string(),
        ])?;
    }
    writer.flush()
}

pub fn csv_string(rows: &[AggregateRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("csv output is ascii")
}

/// `sha256("blob <len>\0" + bytes)` of the instance's canonical JSON, hex
/// encoded, in the manner of git object ids.
pub fn instance_hash(instance: &BanditInstance) -> String {
    let body = serde_json::to_vec(&instance.to_file()).expect("instance files always serialize");
    let mut hasher = Sha256::new();
    hasher.update(format!("blob {}\0", body.len()).as_bytes());
    hasher.update(&body);
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceDigest {
    pub n: usize,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvironmentInfo {
    pub package_version: &'static str,
    pub os: &'static str,
    pub arch: &'static str,
    pub parallel_feature: bool,
    pub jobs: usize,
}

impl EnvironmentInfo {
    pub fn current(jobs: usize) -> Self {
        Self {
            package_version: env!("CARGO_PKG_VERSION"),
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            parallel_feature: cfg!(feature = "parallel"),
            jobs,
        }
    }
}

/// JSON companion of a results CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub spec: ExperimentSpec,
    pub instances: Vec<InstanceDigest>,
    pub rows: Vec<AggregateRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<LogLogFit>,
    pub environment: EnvironmentInfo,
}

impl RunRecord {
    pub fn new(spec: &ExperimentSpec, result: &AggregateResult) -> Result<Self, HarnessError> {
        let instances = spec
            .n_values
            .iter()
            .map(|&n| {
                Ok(InstanceDigest {
                    n,
                    content_hash: instance_hash(&spec.recipe.build(n)?),
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        Ok(Self {
            spec: spec.clone(),
            instances,
            rows: result.rows.clone(),
            fit: result.fit,
            environment: EnvironmentInfo::current(spec.jobs),
        })
    }
}
