//! Takedown-delay distributions and exponential survival fits.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::sor::SorRecord;
use crate::{Error, Real, Result};

/// Fits on fewer observations are reported but not attempted.
pub const DEFAULT_MIN_SAMPLES: usize = 30;

/// Default log-CCDF fit window keeps the head of the distribution, down to
/// this survival level.
pub const DEFAULT_HEAD_SURVIVAL: f64 = 0.05;

/// Half-day offset added to the mean of day-resolution delays.
pub const DISCRETIZATION_OFFSET: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct DelayDistribution<T> {
    pub platform: String,
    pub category: Option<String>,
    /// Delays in whole days; empty when the distribution was given as a curve.
    pub delays: Vec<u32>,
    /// `(t, P(delay ≥ t))` at each support point, ascending in `t`.
    pub ccdf: Vec<(T, T)>,
}

impl<T: Real> DelayDistribution<T> {
    pub fn from_delays(
        platform: impl Into<String>,
        category: Option<String>,
        mut delays: Vec<u32>,
    ) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::Empty(
                "no delays to build a distribution from".into(),
            ));
        }
        delays.sort_unstable();
        let n = T::of_usize(delays.len());
        let mut ccdf = Vec::new();
        let mut i = 0;
        while i < delays.len() {
            let t = delays[i];
            ccdf.push((T::from_u32(t).unwrap(), T::of_usize(delays.len() - i) / n));
            while i < delays.len() && delays[i] == t {
                i += 1;
            }
        }
        Ok(DelayDistribution {
            platform: platform.into(),
            category,
            delays,
            ccdf,
        })
    }

    /// Distribution known only through its survival curve.
    pub fn from_ccdf(platform: impl Into<String>, points: Vec<(T, T)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("empty survival curve".into()));
        }
        check_ccdf(&points)?;
        Ok(DelayDistribution {
            platform: platform.into(),
            category: None,
            delays: Vec::new(),
            ccdf: points,
        })
    }

    /// Sample size; zero for curve-only distributions.
    pub fn n(&self) -> usize {
        self.delays.len()
    }

    /// Step-function survival `P(delay ≥ t)` for any `t`.
    pub fn survival_at(&self, t: T) -> T {
        match self.ccdf.iter().position(|&(s, _)| s >= t) {
            Some(i) => self.ccdf[i].1,
            None => T::zero(),
        }
    }

    pub fn median(&self) -> Option<f64> {
        let d = &self.delays;
        match d.len() {
            0 => None,
            n if n % 2 == 1 => Some(d[n / 2] as f64),
            n => Some((d[n / 2 - 1] as f64 + d[n / 2] as f64) / 2.0),
        }
    }

    pub fn mean(&self) -> Option<f64> {
        if self.delays.is_empty() {
            return None;
        }
        Some(self.delays.iter().map(|&d| d as f64).sum::<f64>() / self.delays.len() as f64)
    }

    /// Default log-CCDF window: from the first support point to the last one
    /// whose survival is at least [`DEFAULT_HEAD_SURVIVAL`].
    pub fn default_fit_range(&self) -> (T, T) {
        let lo = self.ccdf[0].0;
        let floor = T::of(DEFAULT_HEAD_SURVIVAL);
        let hi = self
            .ccdf
            .iter()
            .take_while(|&&(_, p)| p >= floor)
            .last()
            .map_or(lo, |&(t, _)| t);
        (lo, hi)
    }
}

fn check_ccdf<T: Real>(points: &[(T, T)]) -> Result<()> {
    if (points[0].1 - T::one()).abs() > T::of(1e-9) {
        return Err(Error::Corrupt(format!(
            "survival curve starts at {}, not 1",
            points[0].1
        )));
    }
    for w in points.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::Corrupt(
                "survival curve times must be strictly increasing".into(),
            ));
        }
        if w[1].1 > w[0].1 {
            return Err(Error::Corrupt(format!(
                "survival increases from {} to {} at t = {}",
                w[0].1, w[1].1, w[1].0
            )));
        }
    }
    if points.iter().any(|&(_, p)| p < T::zero() || p > T::one()) {
        return Err(Error::Corrupt("survival values must lie in [0,1]".into()));
    }
    Ok(())
}

/// Delays of `records` as one distribution, labelled by platform (or `*`
/// when several platforms are mixed).
pub fn delays_and_ccdf<T: Real>(records: &[SorRecord]) -> Result<DelayDistribution<T>> {
    let first = records
        .first()
        .ok_or_else(|| Error::Empty("no records to compute delays from".into()))?;
    let platform = if records.iter().all(|r| r.platform == first.platform) {
        first.platform.clone()
    } else {
        "*".to_string()
    };
    let delays = records
        .iter()
        .map(|r| u32::try_from(r.delay_days()).map_err(|_| Error::Corrupt("negative delay".into())))
        .collect::<Result<Vec<_>>>()?;
    DelayDistribution::from_delays(platform, None, delays)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    /// Least squares of `ln P(≥t)` against `t`.
    #[serde(rename = "logccdf-ls")]
    LogCcdfLs,
    /// Exponential maximum likelihood: mean delay plus a half-day offset.
    #[serde(rename = "mle")]
    Mle,
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logccdf-ls" | "ls" => Ok(FitMethod::LogCcdfLs),
            "mle" => Ok(FitMethod::Mle),
            other => Err(Error::param(format!("unknown fit method `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauFit<T> {
    pub tau_hat: T,
    pub method: FitMethod,
    pub fit_range: (T, T),
    /// Only for [`FitMethod::LogCcdfLs`].
    pub r_squared: Option<T>,
    pub n: usize,
}

#[derive(Clone, Debug)]
pub struct FitOptions<T> {
    pub method: FitMethod,
    pub fit_range: Option<(T, T)>,
    pub min_samples: usize,
}

impl<T> FitOptions<T> {
    pub fn new(method: FitMethod) -> Self {
        FitOptions {
            method,
            fit_range: None,
            min_samples: DEFAULT_MIN_SAMPLES,
        }
    }
}

pub fn fit_tau<T: Real>(dist: &DelayDistribution<T>, opts: &FitOptions<T>) -> Result<TauFit<T>> {
    if !dist.delays.is_empty() && dist.n() < opts.min_samples {
        return Err(Error::InsufficientData {
            needed: opts.min_samples,
            got: dist.n(),
        });
    }
    match opts.method {
        FitMethod::LogCcdfLs => fit_log_ccdf(dist, opts.fit_range),
        FitMethod::Mle => fit_mle(dist),
    }
}

fn fit_log_ccdf<T: Real>(dist: &DelayDistribution<T>, range: Option<(T, T)>) -> Result<TauFit<T>> {
    check_ccdf(&dist.ccdf)?;
    let (lo, hi) = range.unwrap_or_else(|| dist.default_fit_range());
    let pts: Vec<(T, T)> = dist
        .ccdf
        .iter()
        .filter(|&&(t, p)| t >= lo && t <= hi && p > T::zero())
        .map(|&(t, p)| (t, p.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: pts.len(),
        });
    }
    let line = least_squares(&pts);
    if !(line.slope < T::zero()) {
        return Err(Error::Corrupt(format!(
            "log-survival slope {} is not negative",
            line.slope
        )));
    }
    Ok(TauFit {
        tau_hat: -line.slope.recip(),
        method: FitMethod::LogCcdfLs,
        fit_range: (lo, hi),
        r_squared: Some(line.r_squared),
        n: dist.n(),
    })
}

fn fit_mle<T: Real>(dist: &DelayDistribution<T>) -> Result<TauFit<T>> {
    let n = dist.n();
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let sum: T = dist
        .delays
        .iter()
        .fold(T::zero(), |acc, &d| acc + T::from_u32(d).unwrap());
    let tau_hat = sum / T::of_usize(n) + T::of(DISCRETIZATION_OFFSET);
    Ok(TauFit {
        tau_hat,
        method: FitMethod::Mle,
        fit_range: (
            T::from_u32(dist.delays[0]).unwrap(),
            T::from_u32(dist.delays[n - 1]).unwrap(),
        ),
        r_squared: None,
        n,
    })
}

pub(crate) struct Line<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    /// Standard error of the slope; zero for an exact fit or two points.
    pub slope_stderr: T,
}

/// Ordinary least squares `y = intercept + slope·x`. Centred sums keep the
/// fit exact on noiseless lines.
pub(crate) fn least_squares<T: Real>(pts: &[(T, T)]) -> Line<T> {
    let n = T::of_usize(pts.len());
    let mx = pts.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = pts.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in pts {
        let dx = x - mx;
        let dy = y - my;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    let slope = if sxx > T::zero() {
        sxy / sxx
    } else {
        T::zero()
    };
    let intercept = my - slope * mx;
    let sse = pts.iter().fold(T::zero(), |a, &(x, y)| {
        let r = y - intercept - slope * x;
        a + r * r
    });
    let r_squared = if syy > T::zero() {
        T::one() - sse / syy
    } else {
        T::one()
    };
    let slope_stderr = if pts.len() > 2 && sxx > T::zero() {
        (sse / (n - T::of(2.0)) / sxx).sqrt()
    } else {
        T::zero()
    };
    Line {
        slope,
        intercept,
        r_squared,
        slope_stderr,
    }
}

/// One row of the fit report: both estimators side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub platform: String,
    pub category: String,
    pub n: usize,
    pub tau_logls: Option<f64>,
    pub r2: Option<f64>,
    pub tau_mle: Option<f64>,
}

impl FitRow {
    pub fn from_distribution(dist: &DelayDistribution<f64>, min_samples: usize) -> FitRow {
        let ls = FitOptions {
            min_samples,
            ..FitOptions::new(FitMethod::LogCcdfLs)
        };
        let mle = FitOptions {
            min_samples,
            ..FitOptions::new(FitMethod::Mle)
        };
        let ls = fit_tau(dist, &ls).ok();
        FitRow {
            platform: dist.platform.clone(),
            category: dist.category.clone().unwrap_or_default(),
            n: dist.n(),
            tau_logls: ls.as_ref().map(|f| f.tau_hat),
            r2: ls.and_then(|f| f.r_squared),
            tau_mle: fit_tau(dist, &mle).ok().map(|f| f.tau_hat),
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.tau_logls.is_some() || self.tau_mle.is_some()
    }
}

/// Per-(platform, category) fits; groups below the sample minimum are listed
/// in `skipped`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CategoryReport {
    pub fits: Vec<(FitRow, DelayDistribution<f64>)>,
    pub skipped: Vec<FitRow>,
}

fn group_records<K: Ord>(
    records: &[SorRecord],
    key: impl Fn(&SorRecord) -> K,
) -> BTreeMap<K, Vec<&SorRecord>> {
    let mut groups: BTreeMap<K, Vec<&SorRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
}

fn distribution_of(
    platform: &str,
    category: Option<&str>,
    group: &[&SorRecord],
) -> Result<DelayDistribution<f64>> {
    let delays = group
        .iter()
        .map(|r| u32::try_from(r.delay_days()).map_err(|_| Error::Corrupt("negative delay".into())))
        .collect::<Result<Vec<_>>>()?;
    DelayDistribution::from_delays(platform, category.map(str::to_string), delays)
}

fn report_from_groups<K>(
    groups: BTreeMap<K, Vec<&SorRecord>>,
    label: impl Fn(&K) -> (String, Option<String>),
    min_samples: usize,
) -> Result<CategoryReport> {
    let mut report = CategoryReport::default();
    for (key, group) in groups {
        let (platform, category) = label(&key);
        let dist = distribution_of(&platform, category.as_deref(), &group)?;
        let row = FitRow::from_distribution(&dist, min_samples);
        if dist.n() >= min_samples && row.is_fitted() {
            report.fits.push((row, dist));
        } else {
            report.skipped.push(row);
        }
    }
    Ok(report)
}

/// One fit per platform.
pub fn fit_tau_by_platform(records: &[SorRecord], min_samples: usize) -> Result<CategoryReport> {
    if records.is_empty() {
        return Err(Error::Empty("no records".into()));
    }
    let groups = group_records(records, |r| r.platform.clone());
    report_from_groups(groups, |p| (p.clone(), None), min_samples)
}

/// One fit per (platform, category).
pub fn fit_tau_by_category(records: &[SorRecord], min_samples: usize) -> Result<CategoryReport> {
    if records.is_empty() {
        return Err(Error::Empty("no records".into()));
    }
    let groups = group_records(records, |r| (r.platform.clone(), r.category.clone()));
    report_from_groups(groups, |(p, c)| (p.clone(), Some(c.clone())), min_samples)
}

pub fn write_fit_report<W: Write>(rows: &[FitRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush().map_err(|e| Error::io("", e))?;
    Ok(())
}

pub fn read_fit_report<R: Read>(r: R) -> Result<Vec<FitRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    rdr.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoint {
    pub t: f64,
    pub ccdf: f64,
}

pub fn write_ccdf<W: Write>(dist: &DelayDistribution<f64>, w: W) -> Result<()> {
    let points: Vec<CcdfPoint> = dist
        .ccdf
        .iter()
        .map(|&(t, ccdf)| CcdfPoint { t, ccdf })
        .collect();
    write_ccdf_points(&points, w)
}

pub fn write_ccdf_points<W: Write>(points: &[CcdfPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in points {
        out.serialize(p)?;
    }
    out.flush().map_err(|e| Error::io("", e))?;
    Ok(())
}

pub fn read_ccdf<R: Read>(r: R) -> Result<Vec<CcdfPoint>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcore::seed_rng;
    use chrono::NaiveDate;
    use proptest::prelude::*;
    use rand::Rng;

    fn exponential_days(tau: f64, n: usize, seed: u64) -> Vec<u32> {
        let mut rng = seed_rng(seed);
        (0..n)
            .map(|_| (-(1.0 - rng.random::<f64>()).ln() * tau).floor() as u32)
            .collect()
    }

    fn record(platform: &str, category: &str, delay: i64) -> SorRecord {
        let c = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        SorRecord {
            platform: platform.into(),
            content_date: c,
            application_date: c + chrono::Duration::days(delay),
            decision_ground: super::super::sor::DecisionGround::Illegal,
            category: category.into(),
        }
    }

    #[test]
    fn ccdf_hand_examples() {
        let d = DelayDistribution::<f64>::from_delays("x", None, vec![0, 0, 1]).unwrap();
        assert_eq!(d.ccdf, vec![(0.0, 1.0), (1.0, 1.0 / 3.0)]);
        let d = DelayDistribution::<f64>::from_delays("x", None, vec![5]).unwrap();
        assert_eq!(d.survival_at(5.0), 1.0);
        assert_eq!(d.survival_at(6.0), 0.0);
        assert!(DelayDistribution::<f64>::from_delays("x", None, vec![]).is_err());
    }

    #[test]
    fn synthetic_median_near_tau_ln2() {
        // floor of an exponential has median floor(tau ln 2) or just above
        let d = DelayDistribution::<f64>::from_delays("x", None, exponential_days(10.0, 1000, 1))
            .unwrap();
        let m = d.median().unwrap();
        assert!((6.0..=8.0).contains(&m), "median {m}");
    }

    #[test]
    fn exact_curve_recovers_tau() {
        let pts: Vec<(f64, f64)> = (0..=50)
            .map(|t| (t as f64, (-(t as f64) / 10.0).exp()))
            .collect();
        let d = DelayDistribution::from_ccdf("x", pts).unwrap();
        let fit = fit_tau(&d, &FitOptions::new(FitMethod::LogCcdfLs)).unwrap();
        assert!((fit.tau_hat - 10.0).abs() < 1e-6);
        assert!((fit.r_squared.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_curve_in_f32() {
        let pts: Vec<(f32, f32)> = (0..=20)
            .map(|t| (t as f32, (-(t as f32) / 4.0).exp()))
            .collect();
        let d = DelayDistribution::from_ccdf("x", pts).unwrap();
        let fit = fit_tau(&d, &FitOptions::new(FitMethod::LogCcdfLs)).unwrap();
        assert!((fit.tau_hat - 4.0).abs() < 1e-3);
    }

    #[test]
    fn mle_on_large_sample() {
        let d = DelayDistribution::<f64>::from_delays("x", None, exponential_days(31.0, 50_000, 2))
            .unwrap();
        let fit = fit_tau(&d, &FitOptions::new(FitMethod::Mle)).unwrap();
        assert!((29.5..=32.5).contains(&fit.tau_hat), "{}", fit.tau_hat);
        assert_eq!(fit.n, 50_000);
    }

    #[test]
    fn mle_recovers_range_of_taus() {
        for (i, tau) in [1.0, 6.0, 31.0, 136.0, 286.0].into_iter().enumerate() {
            let d = DelayDistribution::<f64>::from_delays(
                "x",
                None,
                exponential_days(tau, 10_000, 10 + i as u64),
            )
            .unwrap();
            let fit = fit_tau(&d, &FitOptions::new(FitMethod::Mle)).unwrap();
            // whole-day delays: E[floor X] + 0.5 = 1/(e^(1/tau) - 1) + 0.5
            let expected = 1.0 / ((1.0 / tau).exp() - 1.0) + 0.5;
            assert!(
                (fit.tau_hat / expected - 1.0).abs() < 0.05,
                "tau {tau}: {}",
                fit.tau_hat
            );
            assert!(
                (fit.tau_hat / tau - 1.0).abs() < 0.10,
                "tau {tau}: {}",
                fit.tau_hat
            );
        }
    }

    #[test]
    fn fit_errors() {
        let small = DelayDistribution::<f64>::from_delays("x", None, vec![1; 10]).unwrap();
        assert!(matches!(
            fit_tau(&small, &FitOptions::new(FitMethod::Mle)),
            Err(Error::InsufficientData {
                needed: 30,
                got: 10
            })
        ));
        let flat = DelayDistribution::<f64>::from_delays("x", None, vec![3; 40]).unwrap();
        assert!(matches!(
            fit_tau(&flat, &FitOptions::new(FitMethod::LogCcdfLs)),
            Err(Error::InsufficientData { .. })
        ));
        let rising = vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.7)];
        assert!(matches!(
            DelayDistribution::<f64>::from_ccdf("x", rising),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn category_split_recovers_both() {
        let mut records = Vec::new();
        for d in exponential_days(5.0, 5_000, 3) {
            records.push(record("P", "fast", d as i64));
        }
        for d in exponential_days(50.0, 5_000, 4) {
            records.push(record("P", "slow", d as i64));
        }
        records.push(record("P", "rare", 3));
        let report = fit_tau_by_category(&records, DEFAULT_MIN_SAMPLES).unwrap();
        assert_eq!(report.fits.len(), 2);
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].category, "rare");
        for (row, _) in &report.fits {
            let want = if row.category == "fast" { 5.0 } else { 50.0 };
            for tau in [row.tau_logls.unwrap(), row.tau_mle.unwrap()] {
                assert!((tau / want - 1.0).abs() < 0.10, "{row:?}");
            }
        }
    }

    #[test]
    fn single_category_equals_whole_set() {
        let records: Vec<SorRecord> = exponential_days(12.0, 2_000, 5)
            .into_iter()
            .map(|d| record("P", "only", d as i64))
            .collect();
        let report = fit_tau_by_category(&records, DEFAULT_MIN_SAMPLES).unwrap();
        assert_eq!(report.fits.len(), 1);
        let whole: DelayDistribution<f64> = delays_and_ccdf(&records).unwrap();
        let ls = fit_tau(&whole, &FitOptions::new(FitMethod::LogCcdfLs)).unwrap();
        let mle = fit_tau(&whole, &FitOptions::new(FitMethod::Mle)).unwrap();
        assert_eq!(report.fits[0].0.tau_logls, Some(ls.tau_hat));
        assert_eq!(report.fits[0].0.tau_mle, Some(mle.tau_hat));
    }

    #[test]
    fn report_round_trip() {
        let rows = vec![
            FitRow {
                platform: "TikTok".into(),
                category: "hate".into(),
                n: 120,
                tau_logls: Some(9.75),
                r2: Some(0.99),
                tau_mle: Some(10.25),
            },
            FitRow {
                platform: "YouTube".into(),
                category: String::new(),
                n: 4,
                tau_logls: None,
                r2: None,
                tau_mle: None,
            },
        ];
        let mut buf = Vec::new();
        write_fit_report(&rows, &mut buf).unwrap();
        assert_eq!(read_fit_report(buf.as_slice()).unwrap(), rows);

        let d = DelayDistribution::<f64>::from_delays("x", None, vec![0, 0, 1, 4]).unwrap();
        let mut buf = Vec::new();
        write_ccdf(&d, &mut buf).unwrap();
        let back = read_ccdf(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1], CcdfPoint { t: 1.0, ccdf: 0.5 });
    }

    proptest! {
        #[test]
        fn log_ls_exact_on_noiseless_curves(tau in 0.05f64..1000.0) {
            let pts: Vec<(f64, f64)> = (0..40).map(|i| {
                let t = i as f64 * tau / 8.0;
                (t, (-t / tau).exp())
            }).collect();
            let d = DelayDistribution::from_ccdf("x", pts).unwrap();
            let fit = fit_tau(&d, &FitOptions::new(FitMethod::LogCcdfLs)).unwrap();
            prop_assert!((fit.tau_hat / tau - 1.0).abs() < 1e-10);
        }

        #[test]
        fn ccdf_invariants(delays in proptest::collection::vec(0u32..200, 1..300)) {
            let d = DelayDistribution::<f64>::from_delays("x", None, delays).unwrap();
            prop_assert_eq!(d.ccdf[0].1, 1.0);
            prop_assert!(d.ccdf.windows(2).all(|w| w[1].1 <= w[0].1 && w[1].0 > w[0].0));
            prop_assert!(d.ccdf.iter().all(|&(_, p)| p > 0.0 && p <= 1.0));
        }
    }
}
