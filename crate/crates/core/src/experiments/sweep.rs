//! τ sweeps: a shared removal-free baseline battery, one treatment battery
//! per τ cell, and bootstrap intervals on the per-run reductions.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::calibrate::{sample_illegal_probs, IllegalProbSpec};
use crate::engine::{run_until_converged, RunResult};
use crate::experiments::stats::bootstrap_ci;
use crate::netgen::{build_network, FollowerNetwork, NetSpec};
use crate::simcore::{mix2, seed_rng, SimConfig};
use crate::{Error, Result};

const NETWORK_STREAM: u64 = 0x6e65_7477;
const PROBS_STREAM: u64 = 0x7072_6f62;
const BOOTSTRAP_STREAM: u64 = 0x626f_6f74;

/// Platform takedown-delay markers added to the preset grid.
pub const PLATFORM_MARKERS: [f64; 5] = [6.0, 31.0, 87.0, 136.0, 286.0];

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| match i {
                    0 => lo,
                    i if i == n - 1 => hi,
                    i => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
                })
                .collect()
        }
    }
}

/// 2 hours to 739 days, 12 log-spaced points plus the platform markers.
pub fn preset_tau_grid() -> Vec<f64> {
    let mut grid = log_grid(2.0 / 24.0, 739.0, 12);
    grid.extend(PLATFORM_MARKERS);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Prevalence,
    Impressions,
    Reach,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Prevalence, Metric::Impressions, Metric::Reach];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Prevalence => "prevalence",
            Metric::Impressions => "impressions",
            Metric::Reach => "reach",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown metric {s:?}")))
    }
}

/// Where cumulative exposure metrics are read off each run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Horizon {
    /// Each run at its own stopping step.
    #[default]
    OwnConvergence,
    /// Every run of a cell, and the baselines it is compared with, at the
    /// earliest stopping step among them.
    CellMinimum,
}

impl Horizon {
    pub fn as_str(self) -> &'static str {
        match self {
            Horizon::OwnConvergence => "own-convergence",
            Horizon::CellMinimum => "cell-minimum",
        }
    }
}

impl FromStr for Horizon {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "own-convergence" | "own" => Ok(Horizon::OwnConvergence),
            "cell-minimum" | "fixed" => Ok(Horizon::CellMinimum),
            _ => Err(Error::param(format!("unknown horizon {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BootstrapMode {
    /// Resample treatment runs against a fixed baseline mean.
    #[default]
    Treatment,
    /// Resample baseline and treatment runs together.
    Paired,
}

impl BootstrapMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BootstrapMode::Treatment => "treatment",
            BootstrapMode::Paired => "paired",
        }
    }
}

impl FromStr for BootstrapMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "treatment" => Ok(BootstrapMode::Treatment),
            "paired" => Ok(BootstrapMode::Paired),
            _ => Err(Error::param(format!("unknown bootstrap mode {s:?}"))),
        }
    }
}

/// Seed for run `k` of cell `j`; the baseline battery is cell 0.
pub fn run_seed(base: u64, cell: u64, run: u64) -> u64 {
    base ^ mix2(cell, run)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SeedSchedule {
    /// Every cell draws fresh seeds via [`run_seed`].
    #[default]
    PerCell,
    /// Run `k` of every cell reuses the seed of baseline run `k`, so treatment
    /// and baseline share agents, probabilities and legal activity.
    Common,
}

impl SeedSchedule {
    pub fn as_str(self) -> &'static str {
        match self {
            SeedSchedule::PerCell => "per-cell",
            SeedSchedule::Common => "common",
        }
    }

    pub fn seed(self, base: u64, cell: u64, run: u64) -> u64 {
        match self {
            SeedSchedule::PerCell => run_seed(base, cell, run),
            SeedSchedule::Common => run_seed(base, 0, run),
        }
    }
}

impl FromStr for SeedSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-cell" => Ok(SeedSchedule::PerCell),
            "common" => Ok(SeedSchedule::Common),
            _ => Err(Error::param(format!("unknown seed schedule {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub tau_grid: Vec<f64>,
    pub runs_per_cell: usize,
    pub network: NetSpec,
    pub p_spec: IllegalProbSpec,
    pub seed: u64,
    /// Engine and convergence settings; `tau` and `seed` are overridden per run.
    pub sim: SimConfig,
    /// 0 uses the available parallelism.
    pub workers: usize,
    pub horizon: Horizon,
    pub seeds: SeedSchedule,
    pub bootstrap: BootstrapMode,
    pub n_resamples: usize,
    pub level: f64,
}

impl SweepSpec {
    /// Desk preset: synthetic N = 1,000 network, two-group p, 20 runs per cell.
    pub fn desk() -> Self {
        SweepSpec {
            tau_grid: preset_tau_grid(),
            runs_per_cell: 20,
            network: NetSpec::desk(),
            p_spec: IllegalProbSpec::two_group_preset(),
            seed: 1,
            sim: SimConfig::default(),
            workers: 0,
            horizon: Horizon::default(),
            seeds: SeedSchedule::default(),
            bootstrap: BootstrapMode::default(),
            n_resamples: 10_000,
            level: 0.95,
        }
    }

    /// Main-experiment scale: N = 10,006 synthetic stand-in, 70 runs per cell.
    pub fn paper() -> Self {
        SweepSpec {
            runs_per_cell: 70,
            network: NetSpec::paper(),
            ..SweepSpec::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_grid.is_empty() {
            return Err(Error::param("tau grid is empty"));
        }
        if let Some(t) = self
            .tau_grid
            .iter()
            .find(|t| !(**t > 0.0) || !t.is_finite())
        {
            return Err(Error::param(format!(
                "tau grid values must be positive, got {t}"
            )));
        }
        if self.runs_per_cell < 2 {
            return Err(Error::param("runs_per_cell must be at least 2"));
        }
        if self.n_resamples == 0 {
            return Err(Error::param("n_resamples must be positive"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::param(format!(
                "level must lie in (0,1), got {}",
                self.level
            )));
        }
        self.p_spec.validate()?;
        self.sim.validate()
    }
}

/// Outputs of a single run that the sweep keeps.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub converged: bool,
    pub steps: u32,
    pub prevalence: f64,
    pub impressions: u64,
    pub reach: u64,
    /// `(ema, impressions, reach)` after every step, for horizon truncation.
    pub path: Vec<(f64, u64, u64)>,
}

impl RunSummary {
    fn from_run(seed: u64, r: RunResult) -> Self {
        let path = r
            .ema_trace
            .iter()
            .zip(&r.trace)
            .map(|(&e, row)| (e, row.cumulative_impressions, row.reach))
            .collect();
        RunSummary {
            seed,
            converged: r.converged,
            steps: r.steps,
            prevalence: r.prevalence,
            impressions: r.impressions,
            reach: r.reach,
            path,
        }
    }

    /// Metric value after `horizon` steps, or at the end of the run.
    pub fn metric(&self, metric: Metric, horizon: Option<u32>) -> f64 {
        let (e, i, r) = match horizon {
            Some(h) if h >= 1 && !self.path.is_empty() => {
                self.path[(h.min(self.steps) - 1) as usize]
            }
            _ => (self.prevalence, self.impressions, self.reach),
        };
        match metric {
            Metric::Prevalence => e,
            Metric::Impressions => i as f64,
            Metric::Reach => r as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub tau_days: f64,
    pub metric: Metric,
    pub mean_reduction: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_runs: usize,
    pub n_nonconverged: usize,
}

/// Per-τ raw material behind the rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub tau_days: f64,
    pub runs: Vec<RunSummary>,
    pub horizon: Option<u32>,
    /// Per-run reductions indexed by [`Metric`] order.
    pub reductions: [Vec<f64>; 3],
    /// Every run hit the step cap.
    pub flagged: bool,
}

impl Cell {
    pub fn reductions(&self, metric: Metric) -> &[f64] {
        &self.reductions[metric.index()]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub metadata: Vec<(String, String)>,
    pub baseline: Vec<RunSummary>,
    pub cells: Vec<Cell>,
}

impl SweepResult {
    pub fn row(&self, tau_days: f64, metric: Metric) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.tau_days == tau_days)
    }

    pub fn cell(&self, tau_days: f64) -> Option<&Cell> {
        self.cells.iter().find(|c| c.tau_days == tau_days)
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs `(cell, run)` jobs in parallel and returns them in job order.
pub(crate) fn run_batch(
    jobs: &[(u64, Option<f64>)],
    spec: &SweepSpec,
    network: &FollowerNetwork,
) -> Result<Vec<RunSummary>> {
    let runs_per_cell = spec.runs_per_cell as u64;
    let indexed: Vec<(u64, u64, Option<f64>)> = jobs
        .iter()
        .flat_map(|&(cell, tau)| (0..runs_per_cell).map(move |k| (cell, k, tau)))
        .collect();
    with_pool(spec.workers, || {
        indexed
            .par_iter()
            .map(|&(cell, k, tau)| {
                let seed = spec.seeds.seed(spec.seed, cell, k);
                Ok(RunSummary::from_run(
                    seed,
                    sweep_run(spec, network, seed, tau)?,
                ))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

/// One run as a sweep performs it: illegal-posting probabilities and
/// dynamics both derive from `seed`.
pub fn sweep_run(
    spec: &SweepSpec,
    network: &FollowerNetwork,
    seed: u64,
    tau: Option<f64>,
) -> Result<RunResult> {
    let rng = seed_rng(seed);
    let probs = sample_illegal_probs(
        &spec.p_spec,
        network.n_nodes(),
        &mut rng.substream(PROBS_STREAM),
    )?;
    let config = SimConfig {
        tau,
        seed,
        ..spec.sim.clone()
    };
    run_until_converged(&config, network, &probs, rng)
}

pub fn sweep_network(spec: &SweepSpec) -> Result<FollowerNetwork> {
    let mut rng = seed_rng(spec.seed).substream(NETWORK_STREAM);
    build_network(&spec.network, &mut rng)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    let network = sweep_network(spec)?;
    run_sweep_on(spec, &network)
}

/// Sweep on an already built network.
pub fn run_sweep_on(spec: &SweepSpec, network: &FollowerNetwork) -> Result<SweepResult> {
    spec.validate()?;
    let mut jobs = vec![(0u64, None)];
    jobs.extend(
        spec.tau_grid
            .iter()
            .enumerate()
            .map(|(j, &tau)| (j as u64 + 1, Some(tau))),
    );
    let mut all = run_batch(&jobs, spec, network)?;
    let n = spec.runs_per_cell;
    let rest = all.split_off(n);
    let baseline = all;
    if baseline.iter().all(|r| !r.converged) {
        log::warn!("every baseline run hit the step cap");
    }

    let mut cells = Vec::with_capacity(spec.tau_grid.len());
    let mut rows = Vec::with_capacity(spec.tau_grid.len() * 3);
    for (j, (&tau, runs)) in spec.tau_grid.iter().zip(rest.chunks(n)).enumerate() {
        let horizon = match spec.horizon {
            Horizon::OwnConvergence => None,
            Horizon::CellMinimum => baseline.iter().chain(runs).map(|r| r.steps).min(),
        };
        let flagged = runs.iter().all(|r| !r.converged);
        if flagged {
            log::warn!("tau {tau}: every run hit the step cap");
        }
        let n_nonconverged = runs.iter().filter(|r| !r.converged).count();
        let mut reductions: [Vec<f64>; 3] = Default::default();
        for metric in Metric::ALL {
            let base: Vec<f64> = baseline.iter().map(|r| r.metric(metric, horizon)).collect();
            let treat: Vec<f64> = runs.iter().map(|r| r.metric(metric, horizon)).collect();
            let base_mean = crate::experiments::stats::mean(&base);
            if !(base_mean > 0.0) {
                return Err(Error::UndefinedReduction);
            }
            let per_run: Vec<f64> = treat.iter().map(|t| (base_mean - t) / base_mean).collect();
            let mean_reduction = crate::experiments::stats::mean(&per_run);
            let mut rng = seed_rng(spec.seed)
                .substream(BOOTSTRAP_STREAM)
                .substream(mix2(j as u64, metric.index() as u64));
            let (ci_low, ci_high) = match spec.bootstrap {
                BootstrapMode::Treatment => {
                    bootstrap_ci(&per_run, spec.n_resamples, spec.level, &mut rng)?
                }
                BootstrapMode::Paired => {
                    paired_bootstrap(&base, &treat, spec.n_resamples, spec.level, &mut rng)?
                }
            };
            rows.push(SweepRow {
                tau_days: tau,
                metric,
                mean_reduction,
                ci_low: ci_low.min(mean_reduction),
                ci_high: ci_high.max(mean_reduction),
                n_runs: runs.len(),
                n_nonconverged,
            });
            reductions[metric.index()] = per_run;
        }
        cells.push(Cell {
            tau_days: tau,
            runs: runs.to_vec(),
            horizon,
            reductions,
            flagged,
        });
    }

    let metadata = vec![
        ("baseline".to_string(), "shared-across-cells".to_string()),
        ("seed".to_string(), spec.seed.to_string()),
        ("runs_per_cell".to_string(), spec.runs_per_cell.to_string()),
        ("network".to_string(), network.summary()),
        ("p_spec".to_string(), spec.p_spec.kind().to_string()),
        ("horizon".to_string(), spec.horizon.as_str().to_string()),
        ("seeds".to_string(), spec.seeds.as_str().to_string()),
        ("bootstrap".to_string(), spec.bootstrap.as_str().to_string()),
        ("n_resamples".to_string(), spec.n_resamples.to_string()),
        (
            "baseline_nonconverged".to_string(),
            baseline.iter().filter(|r| !r.converged).count().to_string(),
        ),
    ];
    Ok(SweepResult {
        rows,
        metadata,
        baseline,
        cells,
    })
}

/// Percentile interval of `(mean(b*) − mean(t*)) / mean(b*)` with both
/// batteries resampled.
pub fn paired_bootstrap<R: Rng + ?Sized>(
    baseline: &[f64],
    treatment: &[f64],
    n_resamples: usize,
    level: f64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    for g in [baseline, treatment] {
        if g.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: g.len(),
            });
        }
    }
    let resample_mean = |xs: &[f64], rng: &mut R| {
        (0..xs.len())
            .map(|_| xs[rng.random_range(0..xs.len())])
            .sum::<f64>()
            / xs.len() as f64
    };
    let mut stats = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let b = resample_mean(baseline, rng);
        let t = resample_mean(treatment, rng);
        if b > 0.0 {
            stats.push((b - t) / b);
        }
    }
    if stats.is_empty() {
        return Err(Error::UndefinedReduction);
    }
    stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = stats.len();
    let tail = (1.0 - level) / 2.0;
    let lo = ((tail * m as f64).floor() as usize).min(m - 1);
    let hi = (((1.0 - tail) * m as f64).ceil() as usize).clamp(1, m) - 1;
    Ok((stats[lo], stats[hi]))
}

pub const SWEEP_HEADER: [&str; 7] = [
    "tau_days",
    "metric",
    "mean_reduction",
    "ci_low",
    "ci_high",
    "n_runs",
    "n_nonconverged",
];

/// `key=value` pairs written above a sweep table.
pub type Metadata = Vec<(String, String)>;

/// Delimited sweep table preceded by `# key=value` metadata lines.
pub fn write_sweep<W: Write>(result: &SweepResult, mut w: W) -> Result<()> {
    write_rows(&result.metadata, &result.rows, &mut w)
}

pub fn write_rows<W: Write>(
    metadata: &[(String, String)],
    rows: &[SweepRow],
    mut w: W,
) -> Result<()> {
    let io = |e| Error::io("<sweep output>", e);
    for (k, v) in metadata {
        writeln!(w, "# {k}={v}").map_err(io)?;
    }
    writeln!(w, "{}", SWEEP_HEADER.join(",")).map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.tau_days, r.metric, r.mean_reduction, r.ci_low, r.ci_high, r.n_runs, r.n_nonconverged
        )
        .map_err(io)?;
    }
    Ok(())
}

/// Reads what [`write_sweep`] wrote: metadata pairs and rows.
pub fn read_sweep<R: Read>(r: R) -> Result<(Metadata, Vec<SweepRow>)> {
    let mut metadata = Vec::new();
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io("<sweep input>", e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                metadata.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header_seen {
            if fields != SWEEP_HEADER {
                for col in SWEEP_HEADER {
                    if !fields.contains(&col) {
                        return Err(Error::MissingColumn(col.to_string()));
                    }
                }
                return Err(Error::Parse {
                    line: line_no,
                    message: "sweep columns out of order".into(),
                });
            }
            header_seen = true;
            continue;
        }
        if fields.len() != SWEEP_HEADER.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected {} fields, found {}",
                    SWEEP_HEADER.len(),
                    fields.len()
                ),
            });
        }
        let bad = |what: &str| Error::Parse {
            line: line_no,
            message: format!("bad {what}"),
        };
        rows.push(SweepRow {
            tau_days: fields[0].parse().map_err(|_| bad("tau_days"))?,
            metric: fields[1].parse().map_err(|_| bad("metric"))?,
            mean_reduction: fields[2].parse().map_err(|_| bad("mean_reduction"))?,
            ci_low: fields[3].parse().map_err(|_| bad("ci_low"))?,
            ci_high: fields[4].parse().map_err(|_| bad("ci_high"))?,
            n_runs: fields[5].parse().map_err(|_| bad("n_runs"))?,
            n_nonconverged: fields[6].parse().map_err(|_| bad("n_nonconverged"))?,
        });
    }
    if !header_seen {
        return Err(Error::Empty("sweep file has no header".into()));
    }
    Ok((metadata, rows))
}
