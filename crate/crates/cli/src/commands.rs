use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::info;

use takedown_core::calibrate::{
    fit_tau_by_category, fit_tau_by_platform, ingest_sors, read_ccdf, read_fit_report, write_ccdf,
    write_ccdf_points, write_fit_report, FitRow, SorFilter,
};
use takedown_core::engine::{read_trace, write_trace, RunResult};
use takedown_core::experiments::{
    battery_variants, isotonic_nonincreasing, read_distributions, read_pairwise, read_sweep,
    run_sweep_on, run_variants, spearman, sweep_network, sweep_run, write_distributions,
    write_pair_rows, write_pairwise, write_rows, write_sweep, write_variant_cells, BatteryKind,
    Metric,
};
use takedown_core::metrics::reduction;
use takedown_core::netgen::{
    build_network, chung_lu, k_core, load_edge_list, random_walk_growth, read_edge_list,
    thin_to_density, write_edge_list, ChungLuParams, DegreeMode, FollowerNetwork, NetSpec,
    RwgParams,
};
use takedown_core::simcore::seed_rng;

use crate::config::ConfigFile;
use crate::{
    FileKind, FitArgs, FitChoice, NetMode, NetPreset, NetgenArgs, ReportArgs, RobustnessArgs,
    SimulateArgs, SweepArgs,
};

/// Why a subcommand failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Internal(anyhow::Error),
    Data(anyhow::Error),
    NotConverged(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Internal(_) => 1,
            Failure::Data(_) => 2,
            Failure::NotConverged(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Internal(e) | Failure::Data(e) => write!(f, "{e:#}"),
            Failure::NotConverged(what) => write!(f, "{what} did not converge"),
        }
    }
}

impl From<takedown_core::Error> for Failure {
    fn from(e: takedown_core::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Internal(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn data(e: anyhow::Error) -> Failure {
    Failure::Data(e)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(data)
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(data)
}

/// File when given, stdout otherwise.
fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn fit(a: &FitArgs) -> Outcome {
    let filter = SorFilter {
        platform: a.platform.clone(),
        require_illegal_ground: !a.all_grounds,
    };
    let ingest = ingest_sors(&a.sor_file, &filter)?;
    eprintln!(
        "{} rows read, {} kept; {}",
        ingest.rows_read,
        ingest.records.len(),
        ingest.exclusion_summary()
    );
    if ingest.records.is_empty() {
        return Err(data(anyhow!(
            "no usable records in {}",
            a.sor_file.display()
        )));
    }
    let report = if a.by_category {
        fit_tau_by_category(&ingest.records, a.min_samples)?
    } else {
        fit_tau_by_platform(&ingest.records, a.min_samples)?
    };
    for row in &report.skipped {
        eprintln!(
            "{} {}: {} delays, not fitted",
            row.platform, row.category, row.n
        );
    }
    let mut rows: Vec<FitRow> = report
        .fits
        .iter()
        .map(|f| f.0.clone())
        .chain(report.skipped.iter().cloned())
        .collect();
    for row in &mut rows {
        match a.method {
            FitChoice::Both => {}
            FitChoice::Mle => {
                row.tau_logls = None;
                row.r2 = None;
            }
            FitChoice::LogCcdfLs => row.tau_mle = None,
        }
    }
    if let Some(dir) = &a.ccdf_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(data)?;
        for (row, dist) in &report.fits {
            let mut name = sanitize(&row.platform);
            if !row.category.is_empty() {
                name = format!("{name}__{}", sanitize(&row.category));
            }
            write_ccdf(dist, create(&dir.join(format!("{name}.ccdf.csv")))?)?;
        }
    }
    write_fit_report(&rows, output(&a.out)?)?;
    Ok(())
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn netgen(a: &NetgenArgs) -> Outcome {
    let mut rng = seed_rng(a.seed);
    let input = || -> Result<FollowerNetwork, Failure> {
        let path = a
            .input
            .as_ref()
            .ok_or_else(|| data(anyhow!("--mode {:?} needs --input", a.mode)))?;
        Ok(load_edge_list(path)?)
    };
    let net = match a.mode {
        NetMode::Rwg => random_walk_growth(
            &RwgParams {
                n_final: a.n,
                n_init: a.n_init.unwrap_or(a.k_out + 1),
                k_out: a.k_out,
                p_friend: a.p_friend,
            },
            &mut rng,
        )?,
        NetMode::ChungLu => chung_lu(
            &ChungLuParams {
                n_nodes: a.n,
                avg_degree: a.avg_degree,
                exponent: a.exponent,
            },
            &mut rng,
        )?,
        NetMode::Kcore => {
            let degree: DegreeMode = a.degree.parse()?;
            let core = k_core(&input()?, a.k, degree)?.network;
            match a.target_edges {
                Some(e) => thin_to_density(&core, e, &mut rng)?,
                None => core,
            }
        }
        NetMode::Thin => {
            let target = a
                .target_edges
                .ok_or_else(|| data(anyhow!("--mode thin needs --target-edges")))?;
            thin_to_density(&input()?, target, &mut rng)?
        }
        NetMode::Preset => {
            let spec = match a.preset {
                NetPreset::Desk => NetSpec::desk(),
                NetPreset::Paper => NetSpec::paper(),
                NetPreset::PaperWide => NetSpec::paper_wide(),
                NetPreset::DeskEmpiricalStyle => NetSpec::desk_empirical_style(),
            };
            build_network(&spec, &mut rng)?
        }
    };
    write_edge_list(&net, output(&a.out)?)?;
    if a.out.is_some() {
        println!("{}", net.summary());
    } else {
        eprintln!("{}", net.summary());
    }
    Ok(())
}

pub fn simulate(cfg: &ConfigFile, a: &SimulateArgs) -> Outcome {
    let spec = cfg.sweep_spec().map_err(data)?;
    let tau = a.tau.or(cfg.removal.tau);
    let seed = a.seed.unwrap_or(spec.seed);
    let network = sweep_network(&spec)?;
    info!("network {}", network.summary());
    let run = sweep_run(&spec, &network, seed, tau)?;
    let baseline = match (tau, a.no_baseline) {
        (Some(_), false) => Some(sweep_run(&spec, &network, seed, None)?),
        _ => None,
    };

    let mut w = output(&a.out)?;
    let tau_text = tau.map_or_else(|| "none".to_string(), |t| t.to_string());
    writeln!(w, "tau_days={tau_text}")?;
    writeln!(w, "seed={seed}")?;
    writeln!(w, "network={}", network.summary())?;
    write_run(&mut w, "", &run)?;
    if let Some(base) = &baseline {
        write_run(&mut w, "baseline_", base)?;
        let rows = [
            ("prevalence", base.prevalence, run.prevalence),
            (
                "impressions",
                base.impressions as f64,
                run.impressions as f64,
            ),
            ("reach", base.reach as f64, run.reach as f64),
        ];
        for (name, b, t) in rows {
            match reduction(b, t) {
                Ok(r) => writeln!(w, "{name}_reduction={r}")?,
                Err(_) => writeln!(w, "{name}_reduction=undefined")?,
            }
        }
    }
    w.flush()?;
    drop(w);

    if let Some(path) = &a.trace {
        write_trace(&run.trace, create(path)?)?;
    }
    if !run.converged {
        return Err(Failure::NotConverged(format!(
            "run (seed {seed}, tau {tau_text})"
        )));
    }
    if baseline.as_ref().is_some_and(|b| !b.converged) {
        return Err(Failure::NotConverged(format!("baseline run (seed {seed})")));
    }
    Ok(())
}

fn write_run(w: &mut dyn Write, prefix: &str, run: &RunResult) -> io::Result<()> {
    writeln!(w, "{prefix}converged={}", run.converged)?;
    writeln!(w, "{prefix}steps={}", run.steps)?;
    writeln!(w, "{prefix}prevalence={}", run.prevalence)?;
    writeln!(w, "{prefix}impressions={}", run.impressions)?;
    writeln!(w, "{prefix}reach={}", run.reach)?;
    writeln!(w, "{prefix}illegal_created={}", run.illegal_created)?;
    writeln!(w, "{prefix}legal_created={}", run.legal_created)
}

pub fn sweep(cfg: &ConfigFile, a: &SweepArgs) -> Outcome {
    let mut spec = cfg.sweep_spec().map_err(data)?;
    if let Some(grid) = &a.tau_grid {
        spec.tau_grid = grid.clone();
    }
    if let Some(r) = a.runs {
        spec.runs_per_cell = r;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(w) = a.workers {
        spec.workers = w;
    }
    spec.validate()?;
    let network = sweep_network(&spec)?;
    info!(
        "network {}, {} delays x {} runs",
        network.summary(),
        spec.tau_grid.len(),
        spec.runs_per_cell
    );
    let result = run_sweep_on(&spec, &network)?;
    write_sweep(&result, output(&a.out)?)?;
    Ok(())
}

pub fn robustness(cfg: &ConfigFile, a: &RobustnessArgs) -> Outcome {
    let kind: BatteryKind = a.kind.parse()?;
    let mut base = cfg.sweep_spec().map_err(data)?;
    if let Some(r) = a.runs {
        base.runs_per_cell = r;
    }
    if let Some(s) = a.seed {
        base.seed = s;
    }
    if let Some(w) = a.workers {
        base.workers = w;
    }
    base.validate()?;
    let variants = battery_variants(kind, &base)?;
    info!("{} battery, {} variants", kind.as_str(), variants.len());
    let report = run_variants(kind.as_str(), &variants, &base, a.alpha)?;
    if let Some(path) = &a.distributions {
        write_distributions(&report, create(path)?)?;
    }
    write_pairwise(&report, output(&a.out)?)?;
    Ok(())
}

/// First line that is neither blank nor a `#` comment.
fn header_line(path: &Path) -> Result<String, Failure> {
    for line in open(path)?.lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            return Ok(t.to_string());
        }
    }
    Err(data(anyhow!("{} has no header line", path.display())))
}

fn detect(path: &Path) -> Result<FileKind, Failure> {
    let header = header_line(path)?;
    let cols: Vec<&str> = header.split([',', '\t']).map(str::trim).collect();
    let has = |c: &str| cols.contains(&c);
    Ok(if has("mean_reduction") && has("ci_low") {
        FileKind::Sweep
    } else if has("p_adjusted") {
        FileKind::Pairwise
    } else if has("reductions") {
        FileKind::Distributions
    } else if has("tau_mle") || has("tau_logls") {
        FileKind::Fit
    } else if has("ccdf") {
        FileKind::Ccdf
    } else if has("cumulative_impressions") {
        FileKind::Trace
    } else if has("follower") || cols.iter().all(|c| c.parse::<u64>().is_ok()) {
        FileKind::Edges
    } else {
        return Err(data(anyhow!(
            "cannot tell what kind of file {} is; pass --kind",
            path.display()
        )));
    })
}

pub fn report(a: &ReportArgs) -> Outcome {
    let kind = match a.kind {
        FileKind::Auto => detect(&a.file)?,
        k => k,
    };
    let src = || open(&a.file);
    let mut out = output(&None)?;
    match kind {
        FileKind::Sweep => {
            let (meta, rows) = read_sweep(src()?)?;
            if a.summary {
                summarise_sweep(&mut out, &meta, &rows)?;
            } else {
                write_rows(&meta, &rows, &mut out)?;
            }
        }
        FileKind::Pairwise => {
            let pairs = read_pairwise(src()?)?;
            if a.summary {
                let sig = pairs.iter().filter(|p| p.significant).count();
                writeln!(out, "{} comparisons, {sig} significant", pairs.len())?;
                for p in pairs.iter().filter(|p| p.significant) {
                    writeln!(
                        out,
                        "  {} vs {} at tau {} ({}): adjusted p = {}",
                        p.first, p.second, p.tau_days, p.metric, p.p_adjusted
                    )?;
                }
            } else {
                write_pair_rows(&pairs, &mut out)?;
            }
        }
        FileKind::Distributions => {
            let (battery, cells) = read_distributions(src()?)?;
            if a.summary {
                writeln!(out, "battery {battery}")?;
                for c in &cells {
                    writeln!(
                        out,
                        "  {} tau {} {}: mean {:.4} over {} runs",
                        c.variant,
                        c.tau_days,
                        c.metric,
                        c.mean(),
                        c.reductions.len()
                    )?;
                }
            } else {
                write_variant_cells(&battery, &cells, &mut out)?;
            }
        }
        FileKind::Fit => {
            let rows = read_fit_report(src()?)?;
            if a.summary {
                for r in &rows {
                    let show = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.3}"));
                    writeln!(
                        out,
                        "{} {}: n = {}, tau logccdf-ls {}, tau mle {}",
                        r.platform,
                        r.category,
                        r.n,
                        show(r.tau_logls),
                        show(r.tau_mle)
                    )?;
                }
            } else {
                write_fit_report(&rows, &mut out)?;
            }
        }
        FileKind::Ccdf => {
            let points = read_ccdf(src()?)?;
            if a.summary {
                let last = points.last().map_or(0.0, |p| p.t);
                writeln!(out, "{} points up to t = {last}", points.len())?;
            } else {
                write_ccdf_points(&points, &mut out)?;
            }
        }
        FileKind::Trace => {
            let rows = read_trace(src()?)?;
            if a.summary {
                match rows.last() {
                    Some(r) => writeln!(
                        out,
                        "{} steps; final prevalence {}, impressions {}, reach {}",
                        rows.len(),
                        r.prevalence,
                        r.cumulative_impressions,
                        r.reach
                    )?,
                    None => writeln!(out, "empty trace")?,
                }
            } else {
                write_trace(&rows, &mut out)?;
            }
        }
        FileKind::Edges => {
            let net = read_edge_list(src()?)?;
            if a.summary {
                writeln!(out, "{}", net.summary())?;
            } else {
                write_edge_list(&net, &mut out)?;
            }
        }
        FileKind::Auto => unreachable!("resolved above"),
    }
    out.flush()?;
    Ok(())
}

fn summarise_sweep(
    w: &mut dyn Write,
    meta: &[(String, String)],
    rows: &[takedown_core::experiments::SweepRow],
) -> Result<(), Failure> {
    for (k, v) in meta {
        writeln!(w, "{k}: {v}")?;
    }
    for metric in Metric::ALL {
        let sel: Vec<_> = rows.iter().filter(|r| r.metric == metric).collect();
        if sel.is_empty() {
            continue;
        }
        writeln!(w, "{metric}")?;
        for r in &sel {
            writeln!(
                w,
                "  tau {:>10.4}  {:>8.4}  [{:.4}, {:.4}]  {}/{} capped",
                r.tau_days, r.mean_reduction, r.ci_low, r.ci_high, r.n_nonconverged, r.n_runs
            )?;
        }
        let taus: Vec<f64> = sel.iter().map(|r| r.tau_days).collect();
        let means: Vec<f64> = sel.iter().map(|r| r.mean_reduction).collect();
        if let Ok(rho) = spearman(&taus, &means) {
            let iso = isotonic_nonincreasing(&means);
            let inside = sel
                .iter()
                .zip(&iso)
                .all(|(r, &f)| r.ci_low <= f && f <= r.ci_high);
            writeln!(
                w,
                "  Spearman rho {rho:.3}; non-increasing fit inside every CI: {inside}"
            )?;
        }
    }
    Ok(())
}
