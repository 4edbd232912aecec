//! Non-adaptive baseline: sample every arm the same fixed number of times
//! and return the largest empirical mean.

use serde::Serialize;
use thiserror::Error;

use crate::env::{Bandit, EnvError};
use crate::metrics::{compensated_sum, MetricsError};

/// Largest per-arm budget `sufficient_m` will search.
pub const MAX_SUFFICIENT_M: u64 = 1 << 40;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("per-arm budget m must be at least 1")]
    ZeroBudget,
    #[error("total budget {m} x {n_arms} overflows")]
    BudgetOverflow { m: u64, n_arms: usize },
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("no per-arm budget up to 2^40 reaches delta = {0}")]
    Unreachable(f64),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// A fixed, data-independent allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct UniformPlan {
    pub m: u64,
    pub total: u64,
}

impl UniformPlan {
    pub fn new(m: u64, n_arms: usize) -> Result<Self, BaselineError> {
        if m == 0 {
            return Err(BaselineError::ZeroBudget);
        }
        let total = m
            .checked_mul(n_arms as u64)
            .ok_or(BaselineError::BudgetOverflow { m, n_arms })?;
        Ok(Self { m, total })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformOutcome {
    pub chosen: usize,
    pub total_pulls: u64,
    pub means: Vec<f64>,
}

pub fn uniform_best<B: Bandit + ?Sized>(env: &mut B, m: u64) -> Result<UniformOutcome, BaselineError> {
    UniformPlan::new(m, env.n_arms())?;
    let start = env.total_pulls();
    let means = (0..env.n_arms())
        .map(|arm| env.sample_mean(arm, m))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut chosen = 0;
    for (arm, &mu) in means.iter().enumerate() {
        if mu > means[chosen] {
            chosen = arm;
        }
    }
    Ok(UniformOutcome {
        chosen,
        total_pulls: env.total_pulls() - start,
        means,
    })
}

/// Union bound with Hoeffding at deviation `gap / 2`: `sum_i 2 exp(-m gap_i^2 / 2)`.
pub fn union_error_bound(gaps: &[f64], m: u64) -> f64 {
    let m = m as f64;
    compensated_sum(gaps.iter().map(|g| 2.0 * (-m * g * g / 2.0).exp()))
}

/// Smallest `m` in `[1, 2^40]` whose union bound is at most `delta`.
pub fn sufficient_m(gaps: &[f64], delta: f64) -> Result<u64, BaselineError> {
    crate::metrics::hardness_h(gaps)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(BaselineError::BadDelta(delta));
    }
    if union_error_bound(gaps, MAX_SUFFICIENT_M) > delta {
        return Err(BaselineError::Unreachable(delta));
    }
    let (mut lo, mut hi) = (1u64, MAX_SUFFICIENT_M);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if union_error_bound(gaps, mid) <= delta {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}
