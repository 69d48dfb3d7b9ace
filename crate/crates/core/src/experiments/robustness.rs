//! Robustness batteries: rerun the two-delay comparison while varying one
//! axis, then test every pair of variants against each other.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::calibrate::{parse_decimal, IllegalProbSpec, COMMENT_AUDIT};
use crate::experiments::stats::{mann_whitney_bonferroni, mean};
use crate::experiments::sweep::{run_sweep, Metric, SweepSpec};
use crate::netgen::NetSpec;
use crate::{Error, Result};

/// Delays with median takedown of two and eight days.
pub const ROBUSTNESS_TAUS: [f64; 2] = [2.89, 11.54];

pub const DEFAULT_ALPHA: f64 = 0.05;

/// High-risk shares compared by the `s_H` battery.
pub const HIGH_RISK_SHARES: [f64; 3] = [1e-3, 1e-2, 1e-1];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatteryKind {
    PDistributions,
    HighRiskShare,
    PValues,
    Network,
}

impl BatteryKind {
    pub const ALL: [BatteryKind; 4] = [
        BatteryKind::PDistributions,
        BatteryKind::HighRiskShare,
        BatteryKind::PValues,
        BatteryKind::Network,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BatteryKind::PDistributions => "p-distributions",
            BatteryKind::HighRiskShare => "s_H",
            BatteryKind::PValues => "p-values",
            BatteryKind::Network => "network",
        }
    }
}

impl fmt::Display for BatteryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BatteryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p-distributions" => Ok(BatteryKind::PDistributions),
            "s_H" | "s_h" | "s-h" => Ok(BatteryKind::HighRiskShare),
            "p-values" => Ok(BatteryKind::PValues),
            "network" => Ok(BatteryKind::Network),
            _ => Err(Error::param(format!(
                "unknown battery {s:?}; expected p-distributions, s_H, p-values or network"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub p_spec: IllegalProbSpec,
    pub network: NetSpec,
}

/// Illegal ratios of the comment audit at their printed precision, distinct,
/// ascending, without the smallest.
pub fn audit_p_values() -> Vec<f64> {
    let mut ps: Vec<f64> = COMMENT_AUDIT
        .iter()
        .map(|row| {
            let r = parse_decimal(row.illegal_ratio).expect("audit table literals are valid");
            *r.numer() as f64 / *r.denom() as f64
        })
        .collect();
    ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ps.dedup();
    ps.remove(0);
    ps
}

/// The variants a battery compares, built around `base`.
pub fn battery_variants(kind: BatteryKind, base: &SweepSpec) -> Result<Vec<Variant>> {
    let with_p = |label: String, p_spec: IllegalProbSpec| Variant {
        label,
        p_spec,
        network: base.network.clone(),
    };
    Ok(match kind {
        BatteryKind::PDistributions => vec![
            with_p("normal".into(), IllegalProbSpec::normal_preset()),
            with_p("beta".into(), IllegalProbSpec::beta_preset()),
            with_p("two-group".into(), IllegalProbSpec::two_group_preset()),
        ],
        BatteryKind::HighRiskShare => HIGH_RISK_SHARES
            .iter()
            .map(|&s| with_p(format!("s_H={s}"), IllegalProbSpec::two_group_with_share(s)))
            .collect(),
        BatteryKind::PValues => audit_p_values()
            .into_iter()
            .map(|p| {
                Ok(with_p(
                    format!("p={p}"),
                    IllegalProbSpec::beta_with_mean(p)?,
                ))
            })
            .collect::<Result<_>>()?,
        BatteryKind::Network => vec![
            Variant {
                label: "synthetic".into(),
                p_spec: base.p_spec.clone(),
                network: NetSpec::desk(),
            },
            Variant {
                label: "empirical-style".into(),
                p_spec: base.p_spec.clone(),
                network: NetSpec::desk_empirical_style(),
            },
        ],
    })
}

/// Per-run reductions of one variant at one delay.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantCell {
    pub variant: String,
    pub tau_days: f64,
    pub metric: Metric,
    pub reductions: Vec<f64>,
}

impl VariantCell {
    pub fn mean(&self) -> f64 {
        mean(&self.reductions)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairRow {
    pub battery: String,
    pub tau_days: f64,
    pub metric: Metric,
    pub first: String,
    pub second: String,
    pub u: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessReport {
    pub battery: String,
    pub variants: Vec<String>,
    pub cells: Vec<VariantCell>,
    /// Bonferroni families are the variant pairs at one delay and metric.
    pub pairs: Vec<PairRow>,
}

impl RobustnessReport {
    pub fn any_significant(&self, metric: Metric) -> bool {
        self.pairs
            .iter()
            .any(|p| p.metric == metric && p.significant)
    }

    pub fn min_adjusted_p(&self, metric: Metric) -> Option<f64> {
        self.pairs
            .iter()
            .filter(|p| p.metric == metric)
            .map(|p| p.p_adjusted)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }
}

pub fn robustness_battery(kind: BatteryKind, base: &SweepSpec) -> Result<RobustnessReport> {
    let variants = battery_variants(kind, base)?;
    run_variants(kind.as_str(), &variants, base, DEFAULT_ALPHA)
}

/// Sweeps every variant over [`ROBUSTNESS_TAUS`] with the settings of `base`
/// and compares the per-run reductions pairwise.
pub fn run_variants(
    battery: &str,
    variants: &[Variant],
    base: &SweepSpec,
    alpha: f64,
) -> Result<RobustnessReport> {
    if variants.is_empty() {
        return Err(Error::param("battery has no variants"));
    }
    let mut cells = Vec::new();
    for v in variants {
        log::info!("battery {battery}: variant {}", v.label);
        let spec = SweepSpec {
            tau_grid: ROBUSTNESS_TAUS.to_vec(),
            network: v.network.clone(),
            p_spec: v.p_spec.clone(),
            ..base.clone()
        };
        let result = run_sweep(&spec)?;
        for cell in &result.cells {
            for metric in Metric::ALL {
                cells.push(VariantCell {
                    variant: v.label.clone(),
                    tau_days: cell.tau_days,
                    metric,
                    reductions: cell.reductions(metric).to_vec(),
                });
            }
        }
    }

    let mut pairs = Vec::new();
    if variants.len() > 1 {
        for &tau in &ROBUSTNESS_TAUS {
            for metric in Metric::ALL {
                let family: Vec<&VariantCell> = cells
                    .iter()
                    .filter(|c| c.tau_days == tau && c.metric == metric)
                    .collect();
                let groups: Vec<Vec<f64>> = family.iter().map(|c| c.reductions.clone()).collect();
                for t in mann_whitney_bonferroni(&groups, alpha)? {
                    pairs.push(PairRow {
                        battery: battery.to_string(),
                        tau_days: tau,
                        metric,
                        first: family[t.first].variant.clone(),
                        second: family[t.second].variant.clone(),
                        u: t.u,
                        p_value: t.p_value,
                        p_adjusted: t.p_adjusted,
                        significant: t.significant,
                    });
                }
            }
        }
    }
    Ok(RobustnessReport {
        battery: battery.to_string(),
        variants: variants.iter().map(|v| v.label.clone()).collect(),
        cells,
        pairs,
    })
}

pub const PAIRWISE_HEADER: [&str; 9] = [
    "battery",
    "tau_days",
    "metric",
    "first",
    "second",
    "u",
    "p_value",
    "p_adjusted",
    "significant",
];

pub fn write_pairwise<W: Write>(report: &RobustnessReport, w: W) -> Result<()> {
    write_pair_rows(&report.pairs, w)
}

pub fn write_pair_rows<W: Write>(pairs: &[PairRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PAIRWISE_HEADER)?;
    for p in pairs {
        out.write_record([
            p.battery.clone(),
            p.tau_days.to_string(),
            p.metric.to_string(),
            p.first.clone(),
            p.second.clone(),
            p.u.to_string(),
            p.p_value.to_string(),
            p.p_adjusted.to_string(),
            p.significant.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<pairwise output>", e))?;
    Ok(())
}

pub fn read_pairwise<R: Read>(r: R) -> Result<Vec<PairRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers()?.clone();
    for col in PAIRWISE_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    let idx = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let cols: Vec<usize> = PAIRWISE_HEADER.iter().map(|c| idx(c)).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let field = |k: usize| rec.get(cols[k]).unwrap_or("");
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what}"),
        };
        rows.push(PairRow {
            battery: field(0).to_string(),
            tau_days: field(1).parse().map_err(|_| bad("tau_days"))?,
            metric: field(2).parse().map_err(|_| bad("metric"))?,
            first: field(3).to_string(),
            second: field(4).to_string(),
            u: field(5).parse().map_err(|_| bad("u"))?,
            p_value: field(6).parse().map_err(|_| bad("p_value"))?,
            p_adjusted: field(7).parse().map_err(|_| bad("p_adjusted"))?,
            significant: field(8).parse().map_err(|_| bad("significant"))?,
        });
    }
    Ok(rows)
}

/// One line per variant, delay and metric with the mean reduction and the
/// per-run values separated by spaces.
pub fn write_distributions<W: Write>(report: &RobustnessReport, w: W) -> Result<()> {
    write_variant_cells(&report.battery, &report.cells, w)
}

pub fn write_variant_cells<W: Write>(battery: &str, cells: &[VariantCell], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "battery",
        "variant",
        "tau_days",
        "metric",
        "mean_reduction",
        "reductions",
    ])?;
    for c in cells {
        let values: Vec<String> = c.reductions.iter().map(f64::to_string).collect();
        out.write_record([
            battery.to_string(),
            c.variant.clone(),
            c.tau_days.to_string(),
            c.metric.to_string(),
            c.mean().to_string(),
            values.join(" "),
        ])?;
    }
    out.flush()
        .map_err(|e| Error::io("<distribution output>", e))?;
    Ok(())
}

/// Battery name (from the first row, empty for an empty table) and cells.
pub fn read_distributions<R: Read>(r: R) -> Result<(String, Vec<VariantCell>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr.headers()?.clone();
    let mut cols = Vec::new();
    let mut battery = String::new();
    for col in ["variant", "tau_days", "metric", "reductions", "battery"] {
        match headers.iter().position(|h| h == col) {
            Some(i) => cols.push(i),
            None => return Err(Error::MissingColumn(col.to_string())),
        }
    }
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| rec.get(cols[k]).unwrap_or("");
        let bad = |what: &str| Error::Parse {
            line: i as u64 + 2,
            message: format!("bad {what}"),
        };
        let reductions = field(3)
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| bad("reductions")))
            .collect::<Result<Vec<_>>>()?;
        if i == 0 {
            battery = field(4).to_string();
        }
        cells.push(VariantCell {
            variant: field(0).to_string(),
            tau_days: field(1).parse().map_err(|_| bad("tau_days"))?,
            metric: field(2).parse().map_err(|_| bad("metric"))?,
            reductions,
        });
    }
    Ok((battery, cells))
}
