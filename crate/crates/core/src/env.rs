//! Bandit instances and the sampling channel algorithms pull through.
//!
//! A [`BanditInstance`] stores the arm means in internal rank order
//! (rank 0 is the best arm) together with a hidden permutation mapping
//! external arm indices to ranks. Algorithms only ever see external
//! indices, through the [`Bandit`] trait.
//!
//! Randomness is counter based: every draw is produced by a ChaCha8 stream
//! keyed by `(master_seed, trial_id, arm, first_pull_index)`. The reward an
//! arm returns therefore depends only on how many times that arm has been
//! pulled before, never on the interleaving with other arms.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard deviation used for the gaussian family when none is given.
pub const DEFAULT_SIGMA: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("instance needs at least one arm")]
    NoArms,
    #[error("mean {value} of rank {rank} is outside [0, 1]")]
    MeanOutOfRange { rank: usize, value: f64 },
    #[error("means must be non-increasing in rank order (rank {rank} exceeds its predecessor)")]
    NotSorted { rank: usize },
    #[error("rank {rank} ties the best mean; the best arm must be unique")]
    TiesBest { rank: usize },
    #[error("gaussian sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("invalid alpha-instance parameter: {0}")]
    BadAlphaParameter(&'static str),
    #[error("unknown reward family {0:?}")]
    UnknownFamily(String),
    #[error("permutation is not a bijection over {0} arms")]
    BadPermutation(usize),
    #[error("arm {arm} out of range for {n_arms} arms")]
    ArmOutOfRange { arm: usize, n_arms: usize },
    #[error("a batch draw needs at least one pull")]
    EmptyBatch,
    #[error("pull ledger overflow on arm {arm}")]
    LedgerOverflow { arm: usize },
}

/// Reward distribution shared by every arm of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Bernoulli,
    Gaussian { sigma: f64 },
    Deterministic,
}

impl Family {
    pub fn gaussian(sigma: f64) -> Result<Self, EnvError> {
        if sigma.is_finite() && sigma > 0.0 {
            Ok(Family::Gaussian { sigma })
        } else {
            Err(EnvError::BadSigma(sigma))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Bernoulli => "bernoulli",
            Family::Gaussian { .. } => "gaussian",
            Family::Deterministic => "deterministic",
        }
    }

    /// Mean of `count` independent draws from an arm with mean `mean`.
    ///
    /// The sufficient statistic is drawn directly: a binomial count for
    /// bernoulli arms and a single normal variate with variance
    /// `sigma^2 / count` for gaussian arms, so a batch costs O(1) draws
    /// while having exactly the law of `count` separate pulls.
    fn draw_mean<R: Rng + ?Sized>(&self, mean: f64, count: u64, rng: &mut R) -> f64 {
        match *self {
            Family::Deterministic => mean,
            Family::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sigma * z / (count as f64).sqrt()
            }
            Family::Bernoulli => {
                let successes = Binomial::new(count, mean)
                    .expect("means are validated to lie in [0, 1]")
                    .sample(rng);
                successes as f64 / count as f64
            }
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Gaussian { sigma } => write!(f, "gaussian(sigma={sigma})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Ground truth for one problem: ranked means, family and hidden ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    means: Vec<f64>,
    family: Family,
    /// `permutation[external] = rank`.
    permutation: Vec<usize>,
    permutation_seed: Option<u64>,
}

impl BanditInstance {
    /// Builds an instance with the identity permutation.
    ///
    /// `means` are given in rank order. Ties among suboptimal arms are
    /// accepted; a tie with the best mean is not.
    pub fn new(means: Vec<f64>, family: Family) -> Result<Self, EnvError> {
        validate_means(&means)?;
        if let Family::Gaussian { sigma } = family {
            Family::gaussian(sigma)?;
        }
        let permutation = (0..means.len()).collect();
        Ok(Self {
            means,
            family,
            permutation,
            permutation_seed: None,
        })
    }

    /// Builds an instance with an explicit external-to-rank permutation.
    pub fn with_permutation(
        means: Vec<f64>,
        family: Family,
        permutation: Vec<usize>,
    ) -> Result<Self, EnvError> {
        let mut instance = Self::new(means, family)?;
        let n = instance.n_arms();
        let mut seen = vec![false; n];
        if permutation.len() != n {
            return Err(EnvError::BadPermutation(n));
        }
        for &rank in &permutation {
            if rank >= n || std::mem::replace(&mut seen[rank], true) {
                return Err(EnvError::BadPermutation(n));
            }
        }
        instance.permutation = permutation;
        Ok(instance)
    }

    /// The alpha-parameterized family: rank `i` has mean
    /// `mu0 - gap_scale * (i / n)^alpha`, rank 0 has mean `mu0`.
    pub fn alpha(
        n: usize,
        alpha: f64,
        mu0: f64,
        gap_scale: f64,
        family: Family,
    ) -> Result<Self, EnvError> {
        Self::new(alpha_means(n, alpha, mu0, gap_scale)?, family)
    }

    /// Same means, fresh uniformly random permutation drawn from `seed`.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut permutation: Vec<usize> = (0..self.n_arms()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        permutation.shuffle(&mut rng);
        Self {
            means: self.means.clone(),
            family: self.family,
            permutation,
            permutation_seed: Some(seed),
        }
    }

    pub fn n_arms(&self) -> usize {
        self.means.len()
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Means in rank order, best first.
    pub fn ranked_means(&self) -> &[f64] {
        &self.means
    }

    pub fn permutation_seed(&self) -> Option<u64> {
        self.permutation_seed
    }

    /// True mean of an external arm.
    pub fn arm_mean(&self, arm: usize) -> Result<f64, EnvError> {
        self.check_arm(arm)?;
        Ok(self.means[self.permutation[arm]])
    }

    /// External index of the best arm.
    pub fn best_arm(&self) -> usize {
        self.permutation
            .iter()
            .position(|&rank| rank == 0)
            .expect("permutation is a bijection")
    }

    pub fn is_best(&self, arm: usize) -> bool {
        self.permutation.get(arm) == Some(&0)
    }

    fn check_arm(&self, arm: usize) -> Result<(), EnvError> {
        if arm < self.n_arms() {
            Ok(())
        } else {
            Err(EnvError::ArmOutOfRange {
                arm,
                n_arms: self.n_arms(),
            })
        }
    }

    pub fn to_file(&self) -> InstanceFile {
        let sigma = match self.family {
            Family::Gaussian { sigma } => Some(sigma),
            _ => None,
        };
        InstanceFile {
            means: self.means.clone(),
            family: self.family.name().to_string(),
            sigma,
            permutation_seed: self.permutation_seed,
        }
    }
}

/// Means of the alpha-parameterized family, in rank order.
pub fn alpha_means(n: usize, alpha: f64, mu0: f64, gap_scale: f64) -> Result<Vec<f64>, EnvError> {
    if n == 0 {
        return Err(EnvError::BadAlphaParameter("n must be positive"));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(EnvError::BadAlphaParameter("alpha must be finite and >= 0"));
    }
    if !(mu0 > 0.0 && mu0 <= 1.0) {
        return Err(EnvError::BadAlphaParameter("mu0 must lie in (0, 1]"));
    }
    if !(gap_scale > 0.0 && gap_scale <= mu0) {
        return Err(EnvError::BadAlphaParameter("gap_scale must lie in (0, mu0]"));
    }
    let mut means = Vec::with_capacity(n + 1);
    means.push(mu0);
    for i in 1..=n {
        let ratio = i as f64 / n as f64;
        means.push(mu0 - gap_scale * ratio.powf(alpha));
    }
    validate_means(&means)?;
    Ok(means)
}

fn validate_means(means: &[f64]) -> Result<(), EnvError> {
    if means.is_empty() {
        return Err(EnvError::NoArms);
    }
    for (rank, &value) in means.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(EnvError::MeanOutOfRange { rank, value });
        }
        if rank > 0 {
            if value >= means[0] {
                return Err(EnvError::TiesBest { rank });
            }
            if value > means[rank - 1] {
                return Err(EnvError::NotSorted { rank });
            }
        }
    }
    Ok(())
}

/// On-disk instance description. Means are listed in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub means: Vec<f64>,
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub permutation_seed: Option<u64>,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<BanditInstance, EnvError> {
        let family = parse_family(&self.family, self.sigma)?;
        let instance = BanditInstance::new(self.means, family)?;
        Ok(match self.permutation_seed {
            Some(seed) => instance.shuffled(seed),
            None => instance,
        })
    }
}

/// Parses a family name; `sigma` only applies to `gaussian`.
pub fn parse_family(name: &str, sigma: Option<f64>) -> Result<Family, EnvError> {
    match name.to_ascii_lowercase().as_str() {
        "bernoulli" => Ok(Family::Bernoulli),
        "deterministic" => Ok(Family::Deterministic),
        "gaussian" | "normal" => Family::gaussian(sigma.unwrap_or(DEFAULT_SIGMA)),
        _ => Err(EnvError::UnknownFamily(name.to_string())),
    }
}

/// Per-arm pull counts plus their total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PullLedger {
    per_arm: Vec<u64>,
    total: u64,
}

impl PullLedger {
    fn new(n_arms: usize) -> Self {
        Self {
            per_arm: vec![0; n_arms],
            total: 0,
        }
    }

    pub fn per_arm(&self) -> &[u64] {
        &self.per_arm
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    fn record(&mut self, arm: usize, count: u64) -> Result<u64, EnvError> {
        let start = self.per_arm[arm];
        let arm_total = start
            .checked_add(count)
            .ok_or(EnvError::LedgerOverflow { arm })?;
        let total = self
            .total
            .checked_add(count)
            .ok_or(EnvError::LedgerOverflow { arm })?;
        self.per_arm[arm] = arm_total;
        self.total = total;
        Ok(start)
    }
}

/// The sampling interface algorithms are written against.
///
/// Only external arm indices cross this boundary.
pub trait Bandit {
    fn n_arms(&self) -> usize;

    /// One reward from `arm`.
    fn pull(&mut self, arm: usize) -> Result<f64, EnvError>;

    /// Average of `count` fresh rewards from `arm`; charges `count` pulls.
    fn sample_mean(&mut self, arm: usize, count: u64) -> Result<f64, EnvError>;

    fn total_pulls(&self) -> u64;
}

/// One trial's view of an instance: exact ledger and seeded randomness.
#[derive(Debug, Clone)]
pub struct EnvironmentHandle {
    instance: BanditInstance,
    master_seed: u64,
    trial_id: u64,
    ledger: PullLedger,
}

impl EnvironmentHandle {
    pub fn new(instance: BanditInstance, master_seed: u64, trial_id: u64) -> Self {
        let ledger = PullLedger::new(instance.n_arms());
        Self {
            instance,
            master_seed,
            trial_id,
            ledger,
        }
    }

    pub fn instance(&self) -> &BanditInstance {
        &self.instance
    }

    pub fn ledger(&self) -> &PullLedger {
        &self.ledger
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trial_id(&self) -> u64 {
        self.trial_id
    }

    fn stream(&self, arm: usize, first_pull: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.trial_id.to_le_bytes());
        key[16..24].copy_from_slice(&(arm as u64).to_le_bytes());
        key[24..32].copy_from_slice(&first_pull.to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

impl Bandit for EnvironmentHandle {
    fn n_arms(&self) -> usize {
        self.instance.n_arms()
    }

    fn pull(&mut self, arm: usize) -> Result<f64, EnvError> {
        self.sample_mean(arm, 1)
    }

    fn sample_mean(&mut self, arm: usize, count: u64) -> Result<f64, EnvError> {
        let mean = self.instance.arm_mean(arm)?;
        if count == 0 {
            return Err(EnvError::EmptyBatch);
        }
        let first_pull = self.ledger.record(arm, count)?;
        let mut rng = self.stream(arm, first_pull);
        Ok(self.instance.family.draw_mean(mean, count, &mut rng))
    }

    fn total_pulls(&self) -> u64 {
        self.ledger.total()
    }
}
