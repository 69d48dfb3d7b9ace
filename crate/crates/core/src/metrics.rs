//! Prevalence, exposure counters, EMA convergence and reductions against a
//! removal-free baseline.

use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceConfig {
    pub rho: f64,
    pub epsilon: f64,
    /// Steps observed before the stop rule may fire.
    pub warmup: u32,
    pub max_steps: u32,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            rho: 0.9,
            epsilon: 1e-4,
            warmup: 20,
            max_steps: 5_000,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::param(format!(
                "rho must lie in (0,1), got {}",
                self.rho
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::param(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::param("max_steps must be positive"));
        }
        Ok(())
    }
}

/// Exponential moving average of prevalence with the relative-change stop
/// rule `|Ī_t − Ī_{t−1}| / Ī_{t−1} < ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrevalenceEma<T> {
    pub rho: T,
    pub epsilon: T,
    pub warmup: u32,
    pub current: T,
    pub previous: T,
    observed: u32,
}

impl<T: Real> PrevalenceEma<T> {
    /// Empty average; the first observation seeds it.
    pub fn new(rho: T, epsilon: T, warmup: u32) -> Self {
        PrevalenceEma {
            rho,
            epsilon,
            warmup,
            current: T::zero(),
            previous: T::zero(),
            observed: 0,
        }
    }

    pub fn from_config(cfg: &ConvergenceConfig) -> Self {
        Self::new(T::of(cfg.rho), T::of(cfg.epsilon), cfg.warmup)
    }

    /// Average that already holds `value` as if observed once.
    pub fn seeded(value: T, rho: T, epsilon: T, warmup: u32) -> Self {
        PrevalenceEma {
            current: value,
            previous: value,
            observed: 1,
            ..Self::new(rho, epsilon, warmup)
        }
    }

    pub fn observed(&self) -> u32 {
        self.observed
    }

    /// Fold in `i_t`; returns whether the stop rule fires at this update.
    pub fn observe(&mut self, i_t: T) -> bool {
        if self.observed == 0 {
            self.current = i_t;
            self.previous = i_t;
            self.observed = 1;
            return false;
        }
        self.previous = self.current;
        self.current = self.rho * self.previous + (T::one() - self.rho) * i_t;
        self.observed += 1;
        self.converged()
    }

    /// Stop rule on the latest update. A zero previous average defers the
    /// relative test unless the average is identically zero.
    pub fn converged(&self) -> bool {
        if self.observed <= self.warmup.max(1) {
            return false;
        }
        if self.previous > T::zero() {
            (self.current - self.previous).abs() / self.previous < self.epsilon
        } else {
            self.current == T::zero()
        }
    }
}

pub fn update_ema<T: Real>(mut ema: PrevalenceEma<T>, i_t: T) -> (PrevalenceEma<T>, bool) {
    let converged = ema.observe(i_t);
    (ema, converged)
}

/// Mean over agents of the illegal fraction of each feed, given
/// `(illegal, total)` per agent. Empty feeds contribute zero.
pub fn prevalence<T: Real, I>(feeds: I) -> T
where
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut n = 0usize;
    let mut sum = T::zero();
    for (illegal, total) in feeds {
        n += 1;
        if total > 0 {
            sum = sum + T::of_usize(illegal) / T::of_usize(total);
        }
    }
    if n == 0 {
        T::zero()
    } else {
        sum / T::of_usize(n)
    }
}

/// `(baseline − treatment) / baseline`. Negative when the treatment run
/// exceeded the baseline average.
pub fn reduction<T: Real>(baseline_mean: T, treatment: T) -> Result<T> {
    if baseline_mean == T::zero() || !baseline_mean.is_finite() {
        return Err(Error::UndefinedReduction);
    }
    Ok((baseline_mean - treatment) / baseline_mean)
}

/// Cumulative illegal-content exposure of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ExposureCounters {
    /// Deliveries of illegal messages into feeds, repeats included.
    pub impressions: u64,
    /// Distinct users that ever held an illegal message.
    pub reach: u64,
    reached: Vec<bool>,
}

impl ExposureCounters {
    pub fn new(n_agents: usize) -> Self {
        ExposureCounters {
            impressions: 0,
            reach: 0,
            reached: vec![false; n_agents],
        }
    }

    pub fn record(&mut self, agent: usize) {
        self.impressions += 1;
        if !self.reached[agent] {
            self.reached[agent] = true;
            self.reach += 1;
        }
    }

    pub fn was_reached(&self, agent: usize) -> bool {
        self.reached[agent]
    }
}
