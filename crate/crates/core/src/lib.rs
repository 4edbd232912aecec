//! Best-arm identification in stochastic multi-armed bandits.
//!
//! - [`env`]: instances, the [`Bandit`] sampling trait and the seeded,
//!   ledgered [`EnvironmentHandle`].
//! - [`metrics`]: gaps, the `H` and `G` hardness measures, lower bounds,
//!   the exact non-adaptive error floor and the gap slicing.
//! - [`melim`]: Median Elimination.
//! - [`prism`]: the PRISM algorithm and its Conservative variant.
//! - [`baseline`]: uniform allocation with the empirical-max rule.
//! - [`harness`]: Monte Carlo trials, scaling sweeps and result files.
//!
//! With the default `parallel` feature, independent trials are spread over
//! a rayon pool; without it they run sequentially with identical results.

// Negated float comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod env;
pub mod harness;
pub mod melim;
pub mod metrics;
pub mod prism;

pub use env::{Bandit, BanditInstance, EnvironmentHandle, Family};
pub use metrics::TheoryBounds;
pub use prism::{PrismConfig, PrismRun, Variant};
