//! Domain types, simulation configuration and the randomness contract.
//!
//! One timestep is one day. A median takedown delay of two days therefore
//! corresponds to `tau = 2 / ln 2 ≈ 2.89` steps, and sub-day delays are
//! fractional `tau` values (two hours is `tau = 1/12`).

use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::metrics::ConvergenceConfig;
use crate::{Error, Real, Result};

pub type AgentId = u32;
pub type MessageId = u32;
pub type Step = u32;

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub id: MessageId,
    pub author: AgentId,
    pub created_at: Step,
    /// In `(0, 1]`.
    pub appeal: f64,
    pub illegal: bool,
    pub reshare_count: u32,
    pub removed: bool,
    pub removed_at: Option<Step>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    /// Expected sharing actions per step.
    pub activity: f64,
    /// Probability that a newly authored message is illegal.
    pub illegal_prob: f64,
    /// Newest message first.
    pub feed: VecDeque<MessageId>,
}

impl Agent {
    pub fn new(id: AgentId, activity: f64, illegal_prob: f64, feed_capacity: usize) -> Self {
        Agent {
            id,
            activity,
            illegal_prob,
            feed: VecDeque::with_capacity(feed_capacity + 1),
        }
    }

    /// Number of sharing actions this step. Agents with `a < 1` act once
    /// with probability `a`; others act `floor(a)` times. `u` is one uniform
    /// draw, always consumed so that the main stream stays aligned.
    pub fn action_count(&self, u: f64) -> usize {
        if self.activity < 1.0 {
            usize::from(u < self.activity)
        } else {
            self.activity.floor() as usize
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimClock {
    pub t: Step,
}

impl SimClock {
    pub fn advance(&mut self) {
        self.t += 1;
    }
}

/// Factors of the reshare weight `appeal × (1 + reshares) × decay^rank`.
/// Each factor can be switched off for ablation.
#[derive(Clone, Debug, PartialEq)]
pub struct ReshareWeighting {
    pub appeal: bool,
    pub popularity: bool,
    pub recency: bool,
    pub recency_decay: f64,
}

impl Default for ReshareWeighting {
    fn default() -> Self {
        ReshareWeighting {
            appeal: true,
            popularity: true,
            recency: true,
            recency_decay: 0.9,
        }
    }
}

/// What counts as an impression.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExposureMode {
    /// An illegal message entering a feed.
    #[default]
    Delivery,
    /// An illegal message sitting in the feed of an agent when it acts.
    View,
}

impl ExposureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExposureMode::Delivery => "delivery",
            ExposureMode::View => "view",
        }
    }
}

impl std::str::FromStr for ExposureMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delivery" => Ok(ExposureMode::Delivery),
            "view" => Ok(ExposureMode::View),
            _ => Err(Error::param(format!("unknown exposure mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Activity power-law exponent; density ∝ a^(−gamma).
    pub gamma: f64,
    /// Probability that an action is an original post rather than a reshare.
    pub mu_post: f64,
    pub feed_capacity: usize,
    pub a_min: f64,
    /// Upper activity bound; `None` uses the node count.
    pub a_max: Option<f64>,
    /// Expected takedown delay in days; `None` is the removal-free baseline.
    pub tau: Option<f64>,
    pub seed: u64,
    pub reshare: ReshareWeighting,
    pub exposure: ExposureMode,
    pub convergence: ConvergenceConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            gamma: 2.85,
            mu_post: 0.5,
            feed_capacity: 15,
            a_min: 0.1,
            a_max: None,
            tau: None,
            seed: 0,
            reshare: ReshareWeighting::default(),
            exposure: ExposureMode::default(),
            convergence: ConvergenceConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0) {
            return Err(Error::param(format!(
                "gamma must exceed 1, got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.mu_post) {
            return Err(Error::param(format!(
                "mu_post must lie in [0,1], got {}",
                self.mu_post
            )));
        }
        if self.feed_capacity == 0 {
            return Err(Error::param("feed_capacity must be positive"));
        }
        if !(self.a_min > 0.0) {
            return Err(Error::param(format!(
                "a_min must be positive, got {}",
                self.a_min
            )));
        }
        if let Some(a_max) = self.a_max {
            if a_max < self.a_min {
                return Err(Error::param(format!(
                    "a_max {a_max} below a_min {}",
                    self.a_min
                )));
            }
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0) {
                return Err(Error::param(format!("tau must be positive, got {tau}")));
            }
        }
        if !(0.0..=1.0).contains(&self.reshare.recency_decay) {
            return Err(Error::param("recency_decay must lie in [0,1]"));
        }
        self.convergence.validate()
    }

    /// Per-step removal probability `1 − e^(−1/tau)`, zero for the baseline.
    pub fn removal_prob(&self) -> f64 {
        self.tau.map_or(0.0, removal_prob)
    }
}

/// Per-step removal probability for expected delay `tau`: `1 − e^(−1/tau)`.
pub fn removal_prob<T: Real>(tau: T) -> T {
    T::one() - (-tau.recip()).exp()
}

/// Per-step survival probability `e^(−1/tau)`.
pub fn survival_prob<T: Real>(tau: T) -> T {
    (-tau.recip()).exp()
}

/// Deterministic random stream. Identical seeds give bit-identical draws on
/// one build; independent sub-streams are derived by tag.
#[derive(Clone, Debug)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha8Rng,
}

pub fn seed_rng(seed: u64) -> RandomStream {
    RandomStream {
        seed,
        rng: ChaCha8Rng::seed_from_u64(seed),
    }
}

impl RandomStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Independent stream keyed by `tag`; does not advance `self`.
    pub fn substream(&self, tag: u64) -> RandomStream {
        seed_rng(mix2(self.seed, tag))
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mix2(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

/// Counter-based uniform in `[0, 1)` for `(key, a, b)`. The engine uses it
/// for removal draws so that the same message at the same step sees the
/// same uniform under every `tau`.
pub fn keyed_uniform(key: u64, a: u64, b: u64) -> f64 {
    let h = splitmix64(key ^ splitmix64(a.wrapping_mul(0x2545_f491_4f6c_dd1d) ^ splitmix64(b)));
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Draw from the bounded power law with density ∝ a^(−gamma) on
/// `[a_min, a_max]` by inverse-CDF transform.
pub fn sample_activity<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    gamma: T,
    a_min: T,
    a_max: T,
) -> Result<T> {
    check_activity_bounds(gamma, a_min, a_max)?;
    Ok(activity_quantile(
        T::of(rng.random::<f64>()),
        gamma,
        a_min,
        a_max,
    ))
}

fn check_activity_bounds<T: Real>(gamma: T, a_min: T, a_max: T) -> Result<()> {
    if !(gamma > T::one()) {
        return Err(Error::param(format!(
            "activity exponent must exceed 1, got {gamma}"
        )));
    }
    if !(a_min > T::zero()) || !(a_max >= a_min) || !a_max.is_finite() {
        return Err(Error::param(format!(
            "activity bounds must satisfy 0 < a_min <= a_max < inf, got [{a_min}, {a_max}]"
        )));
    }
    Ok(())
}

/// Inverse CDF of the bounded power law at `u ∈ [0, 1)`.
pub fn activity_quantile<T: Real>(u: T, gamma: T, a_min: T, a_max: T) -> T {
    if a_min == a_max {
        return a_min;
    }
    let e = T::one() - gamma;
    let lo = a_min.powf(e);
    let hi = a_max.powf(e);
    (lo + u * (hi - lo)).powf(e.recip()).max(a_min).min(a_max)
}

/// Appeal with density `2(1 − x)` on `(0, 1]`: most content is unappealing.
pub fn sample_appeal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    appeal_from_uniform(rng.random::<f64>())
}

pub fn appeal_from_uniform(u: f64) -> f64 {
    1.0 - u.sqrt()
}
