//! Agent-based simulation of illegal-content diffusion on directed follower
//! networks under delayed takedown, together with the calibration and
//! experiment tooling around it.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`simcore`]: domain types, configuration and the randomness contract.
//! * [`netgen`]: follower-network loading, k-core reduction, thinning and
//!   random-walk growth.
//! * [`calibrate`]: moderation-record ingestion, takedown-delay CCDFs,
//!   exponential fits and illegal-posting probabilities.
//! * [`engine`]: the step loop with resharing and memoryless removal.
//! * [`metrics`]: prevalence, exposure counters, EMA convergence, reductions.
//! * [`experiments`]: sweeps, robustness batteries and their statistics.
//!
//! Numerical routines that do not depend on the random engine are generic
//! over the scalar type (any [`Real`], or any exact [`num_traits::Num`] where
//! only field arithmetic is needed). The aliases below pin the common
//! instantiations.

// Parameter checks use negated comparisons so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod netgen;
pub mod simcore;

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub use error::{Error, Result};

/// Floating-point scalar accepted by the generic numerical routines.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; exact for `f64`, rounding for `f32`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Real")
    }

    /// Conversion from a count.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to any Real")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

/// Exact rational scalar, used where a result must match printed decimals.
pub type Exact = num_rational::Ratio<i64>;

pub type DelayDistribution64 = calibrate::DelayDistribution<f64>;
pub type DelayDistribution32 = calibrate::DelayDistribution<f32>;
pub type TauFit64 = calibrate::TauFit<f64>;
pub type TauFit32 = calibrate::TauFit<f32>;
pub type PrevalenceEma64 = metrics::PrevalenceEma<f64>;
pub type PrevalenceEma32 = metrics::PrevalenceEma<f32>;
pub type SlopeFit64 = experiments::stats::SlopeFit<f64>;
pub type SlopeFit32 = experiments::stats::SlopeFit<f32>;
