//! Gaps, hardness measures, lower bounds and the gap slicing used to
//! predict how many PRISM phases an instance needs.
//!
//! Every function here is pure. Logarithms of `delta` are natural; the
//! `G` measure uses base 2.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;

use serde::Serialize;
use thiserror::Error;

use crate::env::BanditInstance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("a single-arm instance has no gaps")]
    NoGaps,
    #[error("gap {index} is {value}; gaps must be positive")]
    NonPositiveGap { index: usize, value: f64 },
    #[error("gap {index} is {value}; the G measure needs gaps in (0, 1]")]
    GapAboveOne { index: usize, value: f64 },
    #[error("delta must lie in (0, 1), got {0}")]
    BadDelta(f64),
    #[error("alpha must be >= 0, got {0}")]
    NegativeAlpha(f64),
    #[error("n must be positive")]
    ZeroArms,
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Gaps `mu_0 - mu_i` for ranks `1..=n`.
pub fn gaps(instance: &BanditInstance) -> Result<Vec<f64>, MetricsError> {
    let means = instance.ranked_means();
    if means.len() < 2 {
        return Err(MetricsError::NoGaps);
    }
    Ok(means[1..].iter().map(|mu| means[0] - mu).collect())
}

fn check_positive(gaps: &[f64]) -> Result<(), MetricsError> {
    match gaps.iter().position(|&g| !(g > 0.0)) {
        Some(index) => Err(MetricsError::NonPositiveGap {
            index,
            value: gaps[index],
        }),
        None => Ok(()),
    }
}

/// `H = sum_i gap_i^-2`.
pub fn hardness_h(gaps: &[f64]) -> Result<f64, MetricsError> {
    check_positive(gaps)?;
    Ok(compensated_sum(gaps.iter().map(|g| g.powi(-2))))
}

/// `G = sum_i gap_i^-2 * log2(gap_i^-2)`.
pub fn hardness_g(gaps: &[f64]) -> Result<f64, MetricsError> {
    check_positive(gaps)?;
    if let Some(index) = gaps.iter().position(|&g| g > 1.0) {
        return Err(MetricsError::GapAboveOne {
            index,
            value: gaps[index],
        });
    }
    Ok(compensated_sum(gaps.iter().map(|g| {
        let inv = g.powi(-2);
        inv * inv.log2()
    })))
}

/// A bound evaluated at some `delta`, with a flag telling whether `delta`
/// lies in the range where the bound is actually proven.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    pub value: f64,
    pub in_range: bool,
}

/// Upper end of the adaptive bound's validity range, `e^-8 / 8`.
pub fn adaptive_delta_limit() -> f64 {
    (-8.0_f64).exp() / 8.0
}

/// Upper end of the non-adaptive bounds' validity range, `e^-3 / 24`.
pub fn nonadaptive_delta_limit() -> f64 {
    (-3.0_f64).exp() / 24.0
}

/// `c1 * H * ln(1 / (8 delta))`: fewer expected samples than this and any
/// adaptive procedure errs with probability at least `delta`.
pub fn adaptive_lb(h: f64, delta: f64, c1: f64) -> LowerBound {
    LowerBound {
        value: c1 * h * (1.0 / (8.0 * delta)).ln(),
        in_range: delta > 0.0 && delta < adaptive_delta_limit(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NonAdaptiveLb {
    /// Holds for every set of means: `H ln(n / (25 delta))`.
    pub any: f64,
    /// Holds for the hardest instances with hardness `H`: `(H n / 2) ln(1 / (24 delta))`.
    pub worst: f64,
    pub in_range: bool,
}

pub fn nonadaptive_lb(h: f64, n: usize, delta: f64) -> NonAdaptiveLb {
    let n = n as f64;
    NonAdaptiveLb {
        any: h * (n / (25.0 * delta)).ln(),
        worst: h * n / 2.0 * (1.0 / (24.0 * delta)).ln(),
        in_range: delta > 0.0 && delta < nonadaptive_delta_limit(),
    }
}

/// Non-adaptive sample requirement on the alpha family with `n`
/// suboptimal arms.
pub fn alpha_lb(n: usize, alpha: f64, delta: f64) -> Result<LowerBound, MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroArms);
    }
    if !(alpha >= 0.0) {
        return Err(MetricsError::NegativeAlpha(alpha));
    }
    let nf = n as f64;
    let value = if alpha == 0.0 {
        nf * (nf / (25.0 * delta)).ln()
    } else {
        nf.powf(2.0 * alpha + 1.0) * (1.0 / (24.0 * delta)).ln()
    };
    Ok(LowerBound {
        value,
        in_range: delta > 0.0 && delta < nonadaptive_delta_limit(),
    })
}

/// Standard normal CDF via `erfc`, accurate to a few ulps over the whole
/// real line (the tail is computed directly, not as `1 - upper`).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Upper tail `1 - Phi(x)` without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Error floor of the empirical-max rule for unit-variance gaussian arms
/// sampled `m` times each: `1/2 (1 - prod_i Phi(sqrt(m) gap_i))`.
///
/// The product is accumulated as `sum ln(1 - Q_i)` with `Q_i` the upper
/// tail so that tiny error floors keep their relative precision.
pub fn error_lb_exact(gaps: &[f64], m: u64) -> f64 {
    let root_m = (m as f64).sqrt();
    let log_prod = compensated_sum(gaps.iter().map(|g| (-normal_sf(root_m * g)).ln_1p()));
    -0.5 * log_prod.exp_m1()
}

/// The gap slicing `Omega_s` together with the derived phase predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmSlices {
    /// Slice index to member ranks (1-based, as in `gaps`). Slice 0 holds
    /// gaps above the top boundary `5 sqrt2 eps_1`.
    pub slices: BTreeMap<u32, Vec<usize>>,
    /// `ceil(log2(gap_min^-2 ln(1/delta)))`.
    pub s_star: i64,
    /// Highest non-empty slice.
    pub max_slice: u32,
    /// Predicted last phase:
    /// `ceil(log2(2 ln(1/delta)) + max(log2(gap_min^-2), log2(2500 H gap_min^2)))`.
    pub l_pred: i64,
}

/// `5 sqrt2 * sqrt(ln(1/delta) / 2^s)`, the upper edge of slice `s`.
pub fn slice_boundary(s: u32, delta: f64) -> f64 {
    let log_inv = (1.0 / delta).ln();
    5.0 * SQRT_2 * (log_inv / 2f64.powi(s as i32)).sqrt()
}

fn slice_of(gap: f64, delta: f64) -> u32 {
    // Largest s >= 1 with gap <= boundary(s); boundaries shrink with s.
    if gap > slice_boundary(1, delta) {
        return 0;
    }
    let guess = (50.0 * (1.0 / delta).ln() / (gap * gap)).log2().floor();
    let mut s = guess.clamp(1.0, 2000.0) as u32;
    while s > 1 && gap > slice_boundary(s, delta) {
        s -= 1;
    }
    while gap <= slice_boundary(s + 1, delta) {
        s += 1;
    }
    s
}

pub fn slice_arms(gaps: &[f64], delta: f64) -> Result<ArmSlices, MetricsError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MetricsError::BadDelta(delta));
    }
    if gaps.is_empty() {
        return Err(MetricsError::NoGaps);
    }
    let h = hardness_h(gaps)?;
    let mut slices: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &gap) in gaps.iter().enumerate() {
        slices.entry(slice_of(gap, delta)).or_default().push(i + 1);
    }
    let log_inv = (1.0 / delta).ln();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let inv_sq = min_gap.powi(-2);
    let s_star = (inv_sq * log_inv).log2().ceil() as i64;
    let l_pred = ((2.0 * log_inv).log2() + inv_sq.log2().max((2500.0 * h / inv_sq).log2())).ceil()
        as i64;
    let max_slice = *slices.keys().next_back().expect("gaps are non-empty");
    Ok(ArmSlices {
        slices,
        s_star,
        max_slice,
        l_pred,
    })
}

/// Analytic summary of one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryBounds {
    pub n_arms: usize,
    pub delta: f64,
    pub hardness_h: f64,
    pub hardness_g: f64,
    pub adaptive_lb: LowerBound,
    pub nonadaptive_lb: NonAdaptiveLb,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_lb: Option<LowerBound>,
    #[serde(flatten)]
    pub slicing: ArmSlices,
}

impl TheoryBounds {
    /// `alpha` is only known when the instance came from the alpha family.
    pub fn compute(
        instance: &BanditInstance,
        delta: f64,
        c1: f64,
        alpha: Option<f64>,
    ) -> Result<Self, MetricsError> {
        let gaps = gaps(instance)?;
        let h = hardness_h(&gaps)?;
        let n = gaps.len();
        Ok(Self {
            n_arms: instance.n_arms(),
            delta,
            hardness_h: h,
            hardness_g: hardness_g(&gaps)?,
            adaptive_lb: adaptive_lb(h, delta, c1),
            nonadaptive_lb: nonadaptive_lb(h, n, delta),
            alpha_lb: alpha.map(|a| alpha_lb(n, a, delta)).transpose()?,
            slicing: slice_arms(&gaps, delta)?,
        })
    }

    /// `(s, |Omega_s|)` pairs in slice order.
    pub fn slice_counts(&self) -> Vec<(u32, usize)> {
        self.slicing
            .slices
            .iter()
            .map(|(&s, members)| (s, members.len()))
            .collect()
    }
}
