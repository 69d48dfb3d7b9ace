//! Inference helpers for comparing run batteries.

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::calibrate::least_squares;
use crate::{Error, Real, Result};

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_ci<T: Real, R: Rng + ?Sized>(
    samples: &[T],
    n_resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<(T, T)> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: samples.len(),
        });
    }
    if !(level > 0.0 && level < 1.0) || n_resamples == 0 {
        return Err(Error::param(format!(
            "bootstrap needs level in (0,1) and resamples > 0, got {level} / {n_resamples}"
        )));
    }
    let n = samples.len();
    let inv_n = T::of_usize(n).recip();
    let mut means: Vec<T> = (0..n_resamples)
        .map(|_| {
            let sum = (0..n).fold(T::zero(), |acc, _| acc + samples[rng.random_range(0..n)]);
            sum * inv_n
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let tail = (1.0 - level) / 2.0;
    let lo = ((tail * n_resamples as f64).floor() as usize).min(n_resamples - 1);
    let hi = (((1.0 - tail) * n_resamples as f64).ceil() as usize).clamp(1, n_resamples) - 1;
    Ok((means[lo], means[hi]))
}

pub fn mean<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    xs.iter().fold(T::zero(), |a, &x| a + x) / T::of_usize(xs.len())
}

/// Mid-ranks (1-based) of `xs`; tied values share the average rank.
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite samples"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

#[derive(Clone, Debug, PartialEq)]
pub struct MannWhitney {
    /// U statistic of the first group.
    pub u: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

/// Groups up to this size use exact enumeration in [`mann_whitney`].
pub const EXACT_MAX_GROUP: usize = 8;

fn check_groups(a: &[f64], b: &[f64], min: usize) -> Result<()> {
    for g in [a, b] {
        if g.len() < min {
            return Err(Error::InsufficientData {
                needed: min,
                got: g.len(),
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("Mann-Whitney samples must be finite"));
        }
    }
    Ok(())
}

fn u_statistic(ranks: &[f64], n_a: usize) -> f64 {
    let r_a: f64 = ranks[..n_a].iter().sum();
    r_a - (n_a * (n_a + 1)) as f64 / 2.0
}

/// Exact two-sided test: enumerates every assignment of the pooled
/// mid-ranks to the first group.
pub fn mann_whitney_exact(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check_groups(a, b, 1)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (n_a, n_b) = (a.len(), b.len());
    if pooled.len() > 24 {
        return Err(Error::param(
            "exact Mann-Whitney is limited to 24 pooled samples",
        ));
    }
    let u_obs = u_statistic(&ranks, n_a);
    let centre = (n_a * n_b) as f64 / 2.0;
    let observed = (u_obs - centre).abs() - 1e-9;
    let offset = (n_a * (n_a + 1)) as f64 / 2.0;

    let (mut extreme, mut total) = (0u64, 0u64);
    let mut stack: Vec<(usize, usize, f64)> = vec![(0, 0, 0.0)];
    while let Some((next, taken, sum)) = stack.pop() {
        if taken == n_a {
            total += 1;
            if (sum - offset - centre).abs() >= observed {
                extreme += 1;
            }
            continue;
        }
        if pooled.len() - next < n_a - taken {
            continue;
        }
        stack.push((next + 1, taken, sum));
        stack.push((next + 1, taken + 1, sum + ranks[next]));
    }
    Ok(MannWhitney {
        u: u_obs,
        p_value: (extreme as f64 / total as f64).min(1.0),
        exact: true,
    })
}

/// Normal approximation with tie and continuity corrections.
pub fn mann_whitney_normal(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    check_groups(a, b, 1)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let (n_a, n_b) = (a.len() as f64, b.len() as f64);
    let n = n_a + n_b;
    let u = u_statistic(&ranks, a.len());

    let mut sorted = pooled.clone();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let variance = n_a * n_b / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p_value = if variance > 0.0 {
        let z = ((u - n_a * n_b / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
        erfc(z / std::f64::consts::SQRT_2).min(1.0)
    } else {
        1.0
    };
    Ok(MannWhitney {
        u,
        p_value,
        exact: false,
    })
}

/// Exact path when both groups have at most [`EXACT_MAX_GROUP`] samples,
/// normal approximation otherwise.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.len() <= EXACT_MAX_GROUP && b.len() <= EXACT_MAX_GROUP {
        mann_whitney_exact(a, b)
    } else {
        mann_whitney_normal(a, b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseTest {
    pub first: usize,
    pub second: usize,
    pub u: f64,
    pub p_value: f64,
    /// `min(1, p · pairs)`.
    pub p_adjusted: f64,
    pub significant: bool,
}

/// Every pair of groups, Bonferroni-corrected over the number of pairs.
pub fn mann_whitney_bonferroni(groups: &[Vec<f64>], alpha: f64) -> Result<Vec<PairwiseTest>> {
    if groups.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: groups.len(),
        });
    }
    for g in groups {
        check_groups(g, g, 3)?;
    }
    let pairs = groups.len() * (groups.len() - 1) / 2;
    let mut out = Vec::with_capacity(pairs);
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let test = mann_whitney(&groups[i], &groups[j])?;
            let p_adjusted = (test.p_value * pairs as f64).min(1.0);
            out.push(PairwiseTest {
                first: i,
                second: j,
                u: test.u,
                p_value: test.p_value,
                p_adjusted,
                significant: p_adjusted < alpha,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit<T> {
    pub slope: T,
    pub stderr: T,
    pub intercept: T,
}

/// Least squares on `(ln x, ln y)`.
pub fn loglog_slope<T: Real>(x: &[T], y: &[T]) -> Result<SlopeFit<T>> {
    if x.len() != y.len() {
        return Err(Error::param("x and y lengths differ"));
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|&v| !(v > T::zero())) {
        return Err(Error::param("log-log fit needs strictly positive values"));
    }
    let pts: Vec<(T, T)> = x.iter().zip(y).map(|(&a, &b)| (a.ln(), b.ln())).collect();
    let line = least_squares(&pts);
    Ok(SlopeFit {
        slope: line.slope,
        stderr: line.slope_stderr,
        intercept: line.intercept,
    })
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::param(
            "spearman needs two equal-length samples of size >= 2",
        ));
    }
    let rx = midranks(x);
    let ry = midranks(y);
    let (mx, my) = (mean(&rx), mean(&ry));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Least-squares non-increasing fit (pool-adjacent-violators).
pub fn isotonic_nonincreasing(ys: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(ys.len());
    for &y in ys {
        blocks.push((y, 1));
        while blocks.len() > 1 {
            let (m2, w2) = blocks[blocks.len() - 1];
            let (m1, w1) = blocks[blocks.len() - 2];
            if m2 <= m1 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().unwrap() = ((m1 * w1 as f64 + m2 * w2 as f64) / w as f64, w);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, w)| std::iter::repeat_n(m, w))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson chi-square test of lifetimes counted from zero against the
/// geometric law `P(L = l) = r (1 − r)^l`. Bins hold single lifetimes while
/// the expected count is at least 5; the remainder forms a tail bin.
pub fn geometric_gof(lifetimes: &[u32], removal_prob: f64) -> Result<GoodnessOfFit> {
    if !(removal_prob > 0.0 && removal_prob < 1.0) {
        return Err(Error::param(format!(
            "removal probability {removal_prob} outside (0,1)"
        )));
    }
    let n = lifetimes.len() as f64;
    let survive = 1.0 - removal_prob;
    let mut expected = Vec::new();
    let mut mass_left = 1.0;
    let mut l = 0u32;
    loop {
        let p = removal_prob * survive.powi(l as i32);
        if n * p < 5.0 || n * (mass_left - p) < 5.0 {
            break;
        }
        expected.push(n * p);
        mass_left -= p;
        l += 1;
    }
    let cut = expected.len() as u32;
    expected.push(n * mass_left);
    if expected.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: expected.len(),
        });
    }
    let mut observed = vec![0.0; expected.len()];
    for &x in lifetimes {
        observed[x.min(cut) as usize] += 1.0;
    }
    let statistic: f64 = observed
        .iter()
        .zip(&expected)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let df = expected.len() - 1;
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::param(e.to_string()))?;
    Ok(GoodnessOfFit {
        statistic,
        df,
        p_value: 1.0 - chi.cdf(statistic),
        bins: expected.len(),
    })
}
