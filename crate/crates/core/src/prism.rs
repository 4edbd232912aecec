//! PRISM best-arm identification and its Conservative variant.
//!
//! Each phase `l` runs Median Elimination on the active set to obtain a
//! reference arm, samples every active arm `n_l` more times, and drops the
//! arms whose phase mean falls more than `2 eps_l` below the reference
//! arm's phase mean. Phase means are never pooled across phases.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::env::{Bandit, EnvError};
use crate::melim::{self, MeConfig, MeError, DEFAULT_PULL_CAP};

/// Phases after which a trial gives up and reports its best guess.
pub const DEFAULT_PHASE_CAP: u32 = 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrismError {
    #[error("delta {delta} outside (0, {max}] for the {variant:?} variant")]
    BadDelta {
        delta: f64,
        variant: Variant,
        max: f64,
    },
    #[error("phase index must be at least 1")]
    BadPhase,
    #[error("environment has no arms")]
    NoArms,
    #[error("environment ledger is not fresh ({0} pulls already spent)")]
    UsedEnvironment(u64),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    Conservative,
}

impl Variant {
    pub fn max_delta(self) -> f64 {
        match self {
            Variant::Standard => 0.5,
            Variant::Conservative => 0.6,
        }
    }
}

/// Per-phase sampling budget and accuracy targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseSchedule {
    /// Fresh pulls per active arm in the elimination step.
    pub n_ell: u64,
    pub eps_ell: f64,
    /// Confidence handed to Median Elimination.
    pub me_delta: f64,
}

/// Standard: `(l 2^l, sqrt(ln(1/delta) / 2^l), delta^l)`.
/// Conservative: `(2^l, sqrt(ln(l^2/delta) / 2^l), delta / l^2)`.
pub fn phase_schedule(ell: u32, delta: f64, variant: Variant) -> Result<PhaseSchedule, PrismError> {
    if ell == 0 {
        return Err(PrismError::BadPhase);
    }
    check_delta(delta, variant)?;
    let two_pow = 2f64.powi(ell as i32);
    let l = f64::from(ell);
    Ok(match variant {
        Variant::Standard => PhaseSchedule {
            n_ell: u64::from(ell) << ell,
            eps_ell: ((1.0 / delta).ln() / two_pow).sqrt(),
            me_delta: delta.powi(ell as i32),
        },
        Variant::Conservative => PhaseSchedule {
            n_ell: 1u64 << ell,
            eps_ell: ((l * l / delta).ln() / two_pow).sqrt(),
            me_delta: delta / (l * l),
        },
    })
}

fn check_delta(delta: f64, variant: Variant) -> Result<(), PrismError> {
    let max = variant.max_delta();
    if delta > 0.0 && delta <= max {
        Ok(())
    } else {
        Err(PrismError::BadDelta {
            delta,
            variant,
            max,
        })
    }
}

/// Failure probability budget of the standard variant:
/// `3 d^2 / (1 - d^2) + d / (1 - d) + 4 d^2 / (1 - d^2)^2`.
pub fn theorem1_failure_budget(delta: f64) -> f64 {
    let d2 = delta * delta;
    3.0 * d2 / (1.0 - d2) + delta / (1.0 - delta) + 4.0 * d2 / ((1.0 - d2) * (1.0 - d2))
}

/// Failure probability budget of the conservative variant:
/// `2 d + 6 d^2 + 6 d^4`.
pub fn conservative_failure_budget(delta: f64) -> f64 {
    2.0 * delta + 6.0 * delta.powi(2) + 6.0 * delta.powi(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrismConfig {
    pub delta: f64,
    pub variant: Variant,
    pub phase_cap: u32,
    /// Ceiling on pulls per arm requested by any single sampling step.
    pub pull_cap: u64,
}

impl PrismConfig {
    pub fn new(delta: f64, variant: Variant) -> Result<Self, PrismError> {
        check_delta(delta, variant)?;
        Ok(Self {
            delta,
            variant,
            phase_cap: DEFAULT_PHASE_CAP,
            pull_cap: DEFAULT_PULL_CAP,
        })
    }

    pub fn phase_cap(mut self, cap: u32) -> Self {
        self.phase_cap = cap;
        self
    }

    pub fn pull_cap(mut self, cap: u64) -> Self {
        self.pull_cap = cap;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseLog {
    pub phase: u32,
    pub active_before: Vec<usize>,
    pub me_output: usize,
    pub n_ell: u64,
    pub eps_ell: f64,
    pub me_delta: f64,
    pub me_pulls: u64,
    pub phase_means: BTreeMap<usize, f64>,
    pub threshold: f64,
    pub active_after: Vec<usize>,
    pub pulls_phase: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    UniqueSurvivor,
    PhaseCap,
    Overflow,
}

/// Where and why a trial ran out of pull budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverflowInfo {
    pub phase: u32,
    pub active: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrismRun {
    pub chosen: usize,
    pub total_pulls: u64,
    pub phases: Vec<PhaseLog>,
    pub termination: Termination,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overflow: Option<OverflowInfo>,
}

impl PrismRun {
    /// Index of the last phase that ran, 0 if none did.
    pub fn final_phase(&self) -> u32 {
        self.phases.last().map_or(0, |p| p.phase)
    }

    /// Whether `arm` was dropped by any phase.
    pub fn eliminated(&self, arm: usize) -> bool {
        self.phases
            .iter()
            .any(|p| p.active_before.binary_search(&arm).is_ok() && p.active_after.binary_search(&arm).is_err())
    }
}

/// Highest mean wins; equal means go to the lower index.
fn empirical_argmax(means: &BTreeMap<usize, f64>) -> Option<usize> {
    means
        .iter()
        .fold(None, |best: Option<(usize, f64)>, (&arm, &mu)| match best {
            Some((_, b)) if b >= mu => best,
            _ => Some((arm, mu)),
        })
        .map(|(arm, _)| arm)
}

/// Runs PRISM on a fresh environment.
pub fn prism<B: Bandit + ?Sized>(env: &mut B, config: &PrismConfig) -> Result<PrismRun, PrismError> {
    check_delta(config.delta, config.variant)?;
    if env.n_arms() == 0 {
        return Err(PrismError::NoArms);
    }
    if env.total_pulls() != 0 {
        return Err(PrismError::UsedEnvironment(env.total_pulls()));
    }
    let mut active: Vec<usize> = (0..env.n_arms()).collect();
    let mut phases: Vec<PhaseLog> = Vec::new();
    let mut ell = 1u32;

    let finish = |env: &B, phases: Vec<PhaseLog>, chosen: usize, termination, overflow| PrismRun {
        chosen,
        total_pulls: env.total_pulls(),
        phases,
        termination,
        overflow,
    };

    while active.len() > 1 {
        if ell > config.phase_cap {
            let last = phases.last().expect("the cap is only reached after a phase");
            let chosen = empirical_argmax(&last.phase_means).expect("phase means are non-empty");
            return Ok(finish(env, phases, chosen, Termination::PhaseCap, None));
        }
        let sched = phase_schedule(ell, config.delta, config.variant)?;
        let overflow = |detail: String, phases: Vec<PhaseLog>, env: &B, active: &[usize]| {
            let guess = phases
                .last()
                .and_then(|p| empirical_argmax(&p.phase_means))
                .unwrap_or(active[0]);
            let info = OverflowInfo {
                phase: ell,
                active: active.len(),
                detail,
            };
            finish(env, phases, guess, Termination::Overflow, Some(info))
        };

        let before = env.total_pulls();
        let me_config = MeConfig {
            epsilon: sched.eps_ell,
            delta: sched.me_delta,
            pull_cap: config.pull_cap,
        };
        let reference = match melim::median_eliminate(env, &active, &me_config) {
            Ok(out) => out,
            Err(MeError::Env(e)) if !matches!(e, EnvError::LedgerOverflow { .. }) => return Err(e.into()),
            Err(e) => return Ok(overflow(e.to_string(), phases, env, &active)),
        };
        let me_pulls = env.total_pulls() - before;

        if sched.n_ell > config.pull_cap {
            let detail = format!(
                "phase {ell} requests {} pulls per arm, above the cap of {}",
                sched.n_ell, config.pull_cap
            );
            return Ok(overflow(detail, phases, env, &active));
        }
        let mut phase_means = BTreeMap::new();
        for &arm in &active {
            match env.sample_mean(arm, sched.n_ell) {
                Ok(mu) => {
                    phase_means.insert(arm, mu);
                }
                Err(e @ EnvError::LedgerOverflow { .. }) => {
                    return Ok(overflow(e.to_string(), phases, env, &active));
                }
                Err(e) => return Err(e.into()),
            }
        }
        let threshold = phase_means[&reference.chosen] - 2.0 * sched.eps_ell;
        let active_after: Vec<usize> = active
            .iter()
            .copied()
            .filter(|arm| phase_means[arm] >= threshold)
            .collect();

        phases.push(PhaseLog {
            phase: ell,
            active_before: std::mem::take(&mut active),
            me_output: reference.chosen,
            n_ell: sched.n_ell,
            eps_ell: sched.eps_ell,
            me_delta: sched.me_delta,
            me_pulls,
            phase_means,
            threshold,
            active_after: active_after.clone(),
            pulls_phase: env.total_pulls() - before,
        });
        active = active_after;
        ell += 1;
    }
    Ok(finish(env, phases, active[0], Termination::UniqueSurvivor, None))
}
