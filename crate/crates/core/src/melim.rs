//! Median Elimination: an (epsilon, delta)-PAC halving subroutine.
//!
//! Round `l` samples every surviving arm `ceil(4 / eps_l^2 * ln(3 / delta_l))`
//! times with `eps_1 = eps / 4`, `delta_1 = delta / 2`, then keeps the upper
//! half by empirical mean. Accuracies shrink by 3/4 and confidences halve
//! each round, so both sum to at most the caller's budget.

use serde::Serialize;
use thiserror::Error;

use crate::env::{Bandit, EnvError};

/// Default ceiling on pulls requested per arm in a single round.
pub const DEFAULT_PULL_CAP: u64 = 1 << 31;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeError {
    #[error("median elimination needs a non-empty arm set")]
    EmptyArmSet,
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("round {round} requests {requested} pulls per arm, above the cap of {cap}")]
    PullOverflow { round: u32, requested: f64, cap: u64 },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub pull_cap: u64,
}

/// Accuracy, confidence and per-arm pulls of one halving round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeRound {
    pub round: u32,
    pub epsilon: f64,
    pub delta: f64,
    pub pulls_per_arm: u64,
}

impl MeConfig {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self, MeError> {
        Self::with_cap(epsilon, delta, DEFAULT_PULL_CAP)
    }

    pub fn with_cap(epsilon: f64, delta: f64, pull_cap: u64) -> Result<Self, MeError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(MeError::BadEpsilon(epsilon));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(MeError::BadDelta(delta));
        }
        Ok(Self {
            epsilon,
            delta,
            pull_cap,
        })
    }

    /// Parameters of round `round` (1-based).
    pub fn round(&self, round: u32) -> Result<MeRound, MeError> {
        let epsilon = 0.75f64.powi(round as i32 - 1) * self.epsilon / 4.0;
        let delta = self.delta / 2f64.powi(round as i32);
        let requested = (4.0 / (epsilon * epsilon) * (3.0 / delta).ln()).ceil();
        if !(requested <= self.pull_cap as f64) {
            return Err(MeError::PullOverflow {
                round,
                requested,
                cap: self.pull_cap,
            });
        }
        Ok(MeRound {
            round,
            epsilon,
            delta,
            pulls_per_arm: (requested as u64).max(1),
        })
    }

    /// The rounds needed to reduce `n_arms` to one.
    pub fn schedule(&self, n_arms: usize) -> Result<Vec<MeRound>, MeError> {
        (1..=rounds_for(n_arms)).map(|l| self.round(l)).collect()
    }
}

/// `ceil(log2(n))`: halving rounds until one arm is left.
pub fn rounds_for(n_arms: usize) -> u32 {
    n_arms.max(1).next_power_of_two().trailing_zeros()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeOutcome {
    pub chosen: usize,
    pub pulls_used: u64,
    pub rounds: Vec<MeRound>,
}

/// Runs Median Elimination over `arms` (external indices; duplicates are
/// ignored) and returns the surviving arm.
pub fn median_eliminate<B: Bandit + ?Sized>(
    env: &mut B,
    arms: &[usize],
    config: &MeConfig,
) -> Result<MeOutcome, MeError> {
    let mut survivors: Vec<usize> = arms.to_vec();
    survivors.sort_unstable();
    survivors.dedup();
    if survivors.is_empty() {
        return Err(MeError::EmptyArmSet);
    }
    let schedule = config.schedule(survivors.len())?;
    let start = env.total_pulls();
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(survivors.len());
    for round in &schedule {
        scored.clear();
        for &arm in &survivors {
            scored.push((env.sample_mean(arm, round.pulls_per_arm)?, arm));
        }
        // best first; equal means go to the lower index
        scored.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let keep = survivors.len().div_ceil(2);
        survivors = scored[..keep].iter().map(|&(_, arm)| arm).collect();
        survivors.sort_unstable();
    }
    debug_assert_eq!(survivors.len(), 1);
    Ok(MeOutcome {
        chosen: survivors[0],
        pulls_used: env.total_pulls() - start,
        rounds: schedule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{BanditInstance, EnvironmentHandle, Family};

    fn det_env(means: Vec<f64>, seed: u64) -> EnvironmentHandle {
        let inst = BanditInstance::new(means, Family::Deterministic)
            .unwrap()
            .shuffled(seed);
        EnvironmentHandle::new(inst, seed, 0)
    }

    #[test]
    fn singleton_costs_nothing() {
        let mut env = det_env(vec![0.9, 0.5, 0.1], 1);
        let cfg = MeConfig::new(0.1, 0.1).unwrap();
        let out = median_eliminate(&mut env, &[2], &cfg).unwrap();
        assert_eq!(out.chosen, 2);
        assert_eq!(out.pulls_used, 0);
        assert!(out.rounds.is_empty());
    }

    #[test]
    fn empty_set_is_rejected() {
        let mut env = det_env(vec![0.9, 0.1], 0);
        let cfg = MeConfig::new(0.1, 0.1).unwrap();
        assert_eq!(
            median_eliminate(&mut env, &[], &cfg),
            Err(MeError::EmptyArmSet)
        );
    }

    #[test]
    fn config_validation() {
        assert_eq!(MeConfig::new(0.0, 0.1), Err(MeError::BadEpsilon(0.0)));
        assert_eq!(MeConfig::new(0.1, 1.0), Err(MeError::BadDelta(1.0)));
        let cfg = MeConfig::with_cap(1e-6, 1e-6, DEFAULT_PULL_CAP).unwrap();
        assert!(matches!(cfg.round(1), Err(MeError::PullOverflow { round: 1, .. })));
    }

    #[test]
    fn deterministic_arms_pick_the_best() {
        for seed in 0..20 {
            let mut env = det_env(vec![0.9, 0.5, 0.1], seed);
            let best = env.instance().best_arm();
            for eps in [0.05, 0.2, 0.39] {
                let cfg = MeConfig::new(eps, 0.1).unwrap();
                let out = median_eliminate(&mut env, &[0, 1, 2], &cfg).unwrap();
                assert_eq!(out.chosen, best);
            }
        }
    }

    #[test]
    fn median_ties_go_to_lower_index() {
        let inst = BanditInstance::new(vec![0.9, 0.4, 0.4, 0.4], Family::Deterministic).unwrap();
        let mut env = EnvironmentHandle::new(inst, 0, 0);
        // ranks 1..3 are tied; {1, 2, 3} keeps two, lower indices first
        let cfg = MeConfig::new(0.3, 0.1).unwrap();
        let out = median_eliminate(&mut env, &[3, 2, 1], &cfg).unwrap();
        assert_eq!(out.chosen, 1);
    }

    #[test]
    fn pulls_match_schedule_and_ledger() {
        let mut env = det_env((0..11).map(|i| 1.0 - 0.05 * i as f64).collect(), 3);
        let cfg = MeConfig::new(0.2, 0.05).unwrap();
        let arms: Vec<usize> = (0..11).collect();
        let out = median_eliminate(&mut env, &arms, &cfg).unwrap();
        // halving 11 -> 6 -> 3 -> 2 -> 1
        let sizes = [11u64, 6, 3, 2];
        assert_eq!(out.rounds.len(), 4);
        let expected: u64 = out
            .rounds
            .iter()
            .zip(sizes)
            .map(|(r, k)| r.pulls_per_arm * k)
            .sum();
        assert_eq!(out.pulls_used, expected);
        assert_eq!(env.total_pulls(), expected);
    }

    #[test]
    fn schedule_spends_within_budget() {
        for n in [2usize, 3, 8, 100, 1024, 5000] {
            let cfg = MeConfig::new(0.3, 0.2).unwrap();
            let rounds = cfg.schedule(n).unwrap();
            assert_eq!(rounds.len() as u32, rounds_for(n));
            let eps: f64 = rounds.iter().map(|r| r.epsilon).sum();
            let delta: f64 = rounds.iter().map(|r| r.delta).sum();
            assert!(eps <= 0.3);
            assert!(delta <= 0.2);
            assert!(rounds.iter().all(|r| r.pulls_per_arm >= 1));
        }
        assert_eq!(rounds_for(1), 0);
        assert_eq!(rounds_for(2), 1);
        assert_eq!(rounds_for(1024), 10);
        assert_eq!(rounds_for(1025), 11);
    }

    #[test]
    fn first_round_hand_value() {
        // eps_1 = 0.05, delta_1 = 0.05: ceil(1600 * ln 60)
        let cfg = MeConfig::new(0.2, 0.1).unwrap();
        let r = cfg.round(1).unwrap();
        assert_eq!(r.pulls_per_arm, (1600.0 * 60f64.ln()).ceil() as u64);
        assert_eq!(r.pulls_per_arm, 6551);
    }

    #[test]
    fn two_bernoulli_arms_pac() {
        let inst = BanditInstance::new(vec![0.7, 0.3], Family::Bernoulli).unwrap();
        let cfg = MeConfig::new(0.2, 0.1).unwrap();
        let trials = 10_000;
        let mut hits = 0;
        for t in 0..trials {
            let shuffled = inst.shuffled(t);
            let best = shuffled.best_arm();
            let mut env = EnvironmentHandle::new(shuffled, 77, t);
            if median_eliminate(&mut env, &[0, 1], &cfg).unwrap().chosen == best {
                hits += 1;
            }
        }
        assert!(f64::from(hits) / trials as f64 >= 0.9);
    }
}
