//! Illegal-content probability: the population-level ratio estimate from
//! removed-comment audits and per-user probability distributions.

use num_traits::{Num, Signed};
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::{Error, Exact, Result};

/// Fraction of all content that is illegal, from the fraction of content
/// that disappeared and the fraction of disappeared content judged legal:
/// `disappeared/total × (1 − legal/disappeared)`.
pub fn illegal_ratio<T>(disappeared_over_total: T, legal_over_disappeared: T) -> Result<T>
where
    T: Num + PartialOrd + Copy + std::fmt::Debug,
{
    for (name, x) in [
        ("disappeared/total", disappeared_over_total),
        ("legal/disappeared", legal_over_disappeared),
    ] {
        if !(x >= T::zero() && x <= T::one()) {
            return Err(Error::param(format!("{name} must lie in [0,1], got {x:?}")));
        }
    }
    Ok(disappeared_over_total * (T::one() - legal_over_disappeared))
}

/// Exact value of a plain decimal literal such as `0.072`.
pub fn parse_decimal(s: &str) -> Result<Exact> {
    let s = s.trim();
    let bad = || Error::param(format!("not a decimal literal: `{s}`"));
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty()
        || !int_part
            .chars()
            .chain(frac_part.chars())
            .all(|c| c.is_ascii_digit())
        || frac_part.len() > 15
    {
        return Err(bad());
    }
    let scale = 10i64.pow(frac_part.len() as u32);
    let int: i64 = if int_part.is_empty() {
        0
    } else {
        int_part.parse().map_err(|_| bad())?
    };
    let frac: i64 = if frac_part.is_empty() {
        0
    } else {
        frac_part.parse().map_err(|_| bad())?
    };
    let value = Exact::new(int * scale + frac, scale);
    Ok(if negative { -value } else { value })
}

/// Number of digits after the decimal point in a literal.
pub fn decimal_places(s: &str) -> usize {
    s.trim().split_once('.').map_or(0, |(_, f)| f.len())
}

/// Round half away from zero to `places` decimals.
pub fn round_to_places(x: Exact, places: usize) -> Exact {
    let scale = Exact::from_integer(10i64.pow(places as u32));
    let scaled = x * scale;
    let rounded = (scaled.abs() + Exact::new(1, 2)).floor() * scaled.signum();
    rounded / scale
}

/// One row of a removed-comment audit: share of comments that disappeared
/// and share of those later judged legal, as printed decimals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuditRow {
    pub label: &'static str,
    pub disappeared_over_total: &'static str,
    pub legal_over_disappeared: &'static str,
    /// Published illegal ratio, at its printed precision.
    pub illegal_ratio: &'static str,
}

impl AuditRow {
    pub fn exact_ratio(&self) -> Result<Exact> {
        illegal_ratio(
            parse_decimal(self.disappeared_over_total)?,
            parse_decimal(self.legal_over_disappeared)?,
        )
    }

    pub fn ratio(&self) -> f64 {
        let r = self.exact_ratio().expect("audit table literals are valid");
        *r.numer() as f64 / *r.denom() as f64
    }

    /// Whether the exact ratio rounds to the published value.
    pub fn matches_published(&self) -> Result<bool> {
        let places = decimal_places(self.illegal_ratio);
        Ok(round_to_places(self.exact_ratio()?, places) == parse_decimal(self.illegal_ratio)?)
    }
}

/// Removed-comment audit of Facebook and YouTube in three countries
/// (June–July 2023).
pub const COMMENT_AUDIT: [AuditRow; 6] = [
    AuditRow {
        label: "Germany (FB)",
        disappeared_over_total: "0.006",
        legal_over_disappeared: "0.997",
        illegal_ratio: "0.00002",
    },
    AuditRow {
        label: "Germany (YT)",
        disappeared_over_total: "0.115",
        legal_over_disappeared: "0.989",
        illegal_ratio: "0.001",
    },
    AuditRow {
        label: "France (FB)",
        disappeared_over_total: "0.012",
        legal_over_disappeared: "0.921",
        illegal_ratio: "0.0009",
    },
    AuditRow {
        label: "France (YT)",
        disappeared_over_total: "0.072",
        legal_over_disappeared: "0.875",
        illegal_ratio: "0.009",
    },
    AuditRow {
        label: "Sweden (FB)",
        disappeared_over_total: "0.005",
        legal_over_disappeared: "0.946",
        illegal_ratio: "0.0003",
    },
    AuditRow {
        label: "Sweden (YT)",
        disappeared_over_total: "0.041",
        legal_over_disappeared: "0.946",
        illegal_ratio: "0.002",
    },
];

/// Distribution of per-user illegal-posting probabilities.
#[derive(Clone, Debug, PartialEq)]
pub enum IllegalProbSpec {
    /// Clamped to `[0, 1]` after sampling.
    Normal {
        mu: f64,
        sigma: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    /// A random fraction `s_h` of users is high-risk; each group draws from
    /// its own beta distribution.
    TwoGroup {
        s_h: f64,
        alpha_h: f64,
        beta_h: f64,
        alpha_l: f64,
        beta_l: f64,
    },
}

impl IllegalProbSpec {
    /// Nearly homogeneous: N(0.01, 0.001).
    pub fn normal_preset() -> Self {
        IllegalProbSpec::Normal {
            mu: 0.01,
            sigma: 0.001,
        }
    }

    /// Unimodal, moderately heterogeneous: Beta(10, 990).
    pub fn beta_preset() -> Self {
        IllegalProbSpec::Beta {
            alpha: 10.0,
            beta: 990.0,
        }
    }

    /// 10% high-risk users with Beta(3, 30), the rest Beta(0.1, 90).
    pub fn two_group_preset() -> Self {
        Self::two_group_with_share(0.1)
    }

    pub fn two_group_with_share(s_h: f64) -> Self {
        IllegalProbSpec::TwoGroup {
            s_h,
            alpha_h: 3.0,
            beta_h: 30.0,
            alpha_l: 0.1,
            beta_l: 90.0,
        }
    }

    /// Beta(10, 10(1/p − 1)), whose mean is exactly `p`.
    pub fn beta_with_mean(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::param(format!("mean must lie in (0,1), got {p}")));
        }
        Ok(IllegalProbSpec::Beta {
            alpha: 10.0,
            beta: 10.0 * (1.0 / p - 1.0),
        })
    }

    /// Zero everywhere; no illegal content is ever created.
    pub fn none() -> Self {
        IllegalProbSpec::Normal {
            mu: 0.0,
            sigma: 0.0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            IllegalProbSpec::Normal { .. } => "normal",
            IllegalProbSpec::Beta { .. } => "beta",
            IllegalProbSpec::TwoGroup { .. } => "two-group",
        }
    }

    /// Population mean before clamping.
    pub fn analytic_mean(&self) -> f64 {
        match *self {
            IllegalProbSpec::Normal { mu, .. } => mu,
            IllegalProbSpec::Beta { alpha, beta } => alpha / (alpha + beta),
            IllegalProbSpec::TwoGroup {
                s_h,
                alpha_h,
                beta_h,
                alpha_l,
                beta_l,
            } => s_h * alpha_h / (alpha_h + beta_h) + (1.0 - s_h) * alpha_l / (alpha_l + beta_l),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive, got {x}")))
            }
        };
        match *self {
            IllegalProbSpec::Normal { mu, sigma } => {
                if !(sigma >= 0.0 && sigma.is_finite()) || !mu.is_finite() {
                    return Err(Error::param(format!("invalid normal N({mu}, {sigma})")));
                }
            }
            IllegalProbSpec::Beta { alpha, beta } => {
                positive("alpha", alpha)?;
                positive("beta", beta)?;
            }
            IllegalProbSpec::TwoGroup {
                s_h,
                alpha_h,
                beta_h,
                alpha_l,
                beta_l,
            } => {
                if !(0.0..=1.0).contains(&s_h) {
                    return Err(Error::param(format!("s_h must lie in [0,1], got {s_h}")));
                }
                positive("alpha_h", alpha_h)?;
                positive("beta_h", beta_h)?;
                positive("alpha_l", alpha_l)?;
                positive("beta_l", beta_l)?;
            }
        }
        Ok(())
    }
}

/// `n` per-user probabilities. Two-group membership is a uniformly random
/// subset of `round(s_h·n)` users, redrawn on every call.
pub fn sample_illegal_probs<R: Rng + ?Sized>(
    spec: &IllegalProbSpec,
    n: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let beta =
        |a: f64, b: f64| Beta::new(a, b).map_err(|e| Error::param(format!("beta({a}, {b}): {e}")));
    let probs = match *spec {
        IllegalProbSpec::Normal { mu, sigma } => {
            let dist = Normal::new(mu, sigma).map_err(|e| Error::param(e.to_string()))?;
            (0..n).map(|_| dist.sample(rng).clamp(0.0, 1.0)).collect()
        }
        IllegalProbSpec::Beta { alpha, beta: b } => {
            let dist = beta(alpha, b)?;
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        IllegalProbSpec::TwoGroup {
            s_h,
            alpha_h,
            beta_h,
            alpha_l,
            beta_l,
        } => {
            let high = beta(alpha_h, beta_h)?;
            let low = beta(alpha_l, beta_l)?;
            let n_high = ((s_h * n as f64).round() as usize).min(n);
            let mut is_high = vec![false; n];
            for i in rand::seq::index::sample(rng, n, n_high) {
                is_high[i] = true;
            }
            is_high
                .into_iter()
                .map(|h| if h { high.sample(rng) } else { low.sample(rng) })
                .collect()
        }
    };
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::seed_rng;

    #[test]
    fn ratio_examples() {
        let r = illegal_ratio(0.072, 0.875).unwrap();
        assert!((r - 0.009_f64).abs() < 1e-12);
        assert_eq!(illegal_ratio(0.0, 0.3).unwrap(), 0.0);
        let r = illegal_ratio(0.115, 0.989).unwrap();
        assert!((r - 0.001265_f64).abs() < 1e-12);
        assert!(illegal_ratio(1.2, 0.5).is_err());
        assert!(illegal_ratio(0.5, -0.1).is_err());
    }

    #[test]
    fn exact_ratio_and_rounding() {
        let r = illegal_ratio(
            parse_decimal("0.115").unwrap(),
            parse_decimal("0.989").unwrap(),
        )
        .unwrap();
        assert_eq!(r, Exact::new(1265, 1_000_000));
        assert_eq!(round_to_places(r, 3), Exact::new(1, 1000));
        assert_eq!(round_to_places(Exact::new(5, 1000), 2), Exact::new(1, 100));
        assert_eq!(parse_decimal("-1.5").unwrap(), Exact::new(-3, 2));
        assert!(parse_decimal("1.2.3").is_err());
        assert!(parse_decimal("abc").is_err());
    }

    #[test]
    fn audit_table_reproduces_published_ratios() {
        for row in COMMENT_AUDIT {
            assert!(row.matches_published().unwrap(), "{}", row.label);
        }
    }

    #[test]
    fn ratio_monotonicity() {
        let xs = [0.0, 0.1, 0.4, 0.9, 1.0];
        for w in xs.windows(2) {
            for &y in &[0.0, 0.5, 0.9] {
                assert!(illegal_ratio(w[1], y).unwrap() >= illegal_ratio(w[0], y).unwrap());
                assert!(illegal_ratio(y, w[1]).unwrap() <= illegal_ratio(y, w[0]).unwrap());
            }
        }
    }

    #[test]
    fn preset_means() {
        for spec in [
            IllegalProbSpec::normal_preset(),
            IllegalProbSpec::beta_preset(),
            IllegalProbSpec::two_group_preset(),
        ] {
            assert!((spec.analytic_mean() - 0.01).abs() < 1e-3, "{spec:?}");
        }
        let tg = IllegalProbSpec::two_group_preset().analytic_mean();
        assert!((tg - 0.010_089_8).abs() < 1e-6, "{tg}");
        assert!(
            (IllegalProbSpec::beta_with_mean(0.0003)
                .unwrap()
                .analytic_mean()
                - 0.0003)
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn two_group_sample_mean() {
        let mut rng = seed_rng(1);
        let ps = sample_illegal_probs(&IllegalProbSpec::two_group_preset(), 1_000_000, &mut rng)
            .unwrap();
        let mean = ps.iter().sum::<f64>() / ps.len() as f64;
        assert!((0.0095..=0.0106).contains(&mean), "{mean}");
        assert!(ps.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn beta_sample_mean() {
        let mut rng = seed_rng(2);
        let ps =
            sample_illegal_probs(&IllegalProbSpec::beta_preset(), 1_000_000, &mut rng).unwrap();
        let mean = ps.iter().sum::<f64>() / ps.len() as f64;
        assert!((0.0099..=0.0101).contains(&mean), "{mean}");
    }

    #[test]
    fn degenerate_normal_and_clamping() {
        let mut rng = seed_rng(3);
        let ps = sample_illegal_probs(
            &IllegalProbSpec::Normal {
                mu: 0.01,
                sigma: 0.0,
            },
            100,
            &mut rng,
        )
        .unwrap();
        assert!(ps.iter().all(|&p| p == 0.01));
        let wide = sample_illegal_probs(
            &IllegalProbSpec::Normal {
                mu: 0.0,
                sigma: 1.0,
            },
            1000,
            &mut rng,
        )
        .unwrap();
        assert!(wide.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(wide.contains(&0.0));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut rng = seed_rng(4);
        for bad in [
            IllegalProbSpec::Beta {
                alpha: 0.0,
                beta: 1.0,
            },
            IllegalProbSpec::Normal {
                mu: 0.1,
                sigma: -1.0,
            },
            IllegalProbSpec::two_group_with_share(1.5),
        ] {
            assert!(sample_illegal_probs(&bad, 10, &mut rng).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn two_group_membership_count() {
        let mut rng = seed_rng(5);
        let spec = IllegalProbSpec::TwoGroup {
            s_h: 0.25,
            alpha_h: 1000.0,
            beta_h: 1.0,
            alpha_l: 1.0,
            beta_l: 1000.0,
        };
        let ps = sample_illegal_probs(&spec, 400, &mut rng).unwrap();
        assert_eq!(ps.iter().filter(|&&p| p > 0.5).count(), 100);
    }
}
