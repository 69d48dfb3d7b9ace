//! Statement-of-reasons ingestion.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{Days, NaiveDate};
use log::debug;
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::{Error, Result};

/// Placeholder creation date some platforms emit for unknown dates.
pub const SENTINEL_CONTENT_DATE: NaiveDate = match NaiveDate::from_ymd_opt(2000, 1, 1) {
    Some(d) => d,
    None => panic!("valid date"),
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DecisionGround {
    Illegal,
    Incompatible,
    Other,
}

impl DecisionGround {
    /// Accepts short labels (`illegal`) and the database enumerations
    /// (`DECISION_GROUND_ILLEGAL_CONTENT`).
    pub fn parse(raw: &str) -> DecisionGround {
        let s = raw.trim().to_ascii_lowercase();
        if s.contains("incompatible") {
            DecisionGround::Incompatible
        } else if s.contains("illegal") {
            DecisionGround::Illegal
        } else {
            DecisionGround::Other
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SorRecord {
    pub platform: String,
    pub content_date: NaiveDate,
    pub application_date: NaiveDate,
    pub decision_ground: DecisionGround,
    pub category: String,
}

impl SorRecord {
    /// Takedown delay in whole days.
    pub fn delay_days(&self) -> i64 {
        (self.application_date - self.content_date).num_days()
    }
}

/// Parsed records plus the number of rows dropped for each reason.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IngestReport {
    pub records: Vec<SorRecord>,
    pub rows_read: usize,
    pub negative_delay: usize,
    pub sentinel_date: usize,
    pub wrong_ground: usize,
    pub other_platform: usize,
    pub unparseable_date: usize,
}

impl IngestReport {
    pub fn excluded(&self) -> usize {
        self.negative_delay
            + self.sentinel_date
            + self.wrong_ground
            + self.other_platform
            + self.unparseable_date
    }

    pub fn exclusion_summary(&self) -> String {
        format!(
            "read={} kept={} negative_delay={} sentinel_date={} wrong_ground={} other_platform={} unparseable_date={}",
            self.rows_read,
            self.records.len(),
            self.negative_delay,
            self.sentinel_date,
            self.wrong_ground,
            self.other_platform,
            self.unparseable_date
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct SorFilter {
    /// Case-insensitive platform name; `None` keeps every platform.
    pub platform: Option<String>,
    pub require_illegal_ground: bool,
}

const COLUMNS: [(&str, &[&str]); 5] = [
    ("platform", &["platform", "platform_name"]),
    ("content_date", &["content_date"]),
    ("application_date", &["application_date"]),
    ("decision_ground", &["decision_ground"]),
    ("category", &["category"]),
];

pub fn ingest_sors(path: impl AsRef<Path>, filter: &SorFilter) -> Result<IngestReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_sors(BufReader::new(file), filter).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Read a comma- or tab-separated file with named columns. The delimiter is
/// taken from the header line.
pub fn read_sors<R: Read>(reader: R, filter: &SorFilter) -> Result<IngestReport> {
    let mut reader = BufReader::new(reader);
    let delimiter = {
        let head = reader.fill_buf().map_err(|e| Error::io("", e))?;
        let first_line = head.split(|&b| b == b'\n').next().unwrap_or(&[]);
        if first_line.contains(&b'\t') {
            b'\t'
        } else {
            b','
        }
    };
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers()?.clone();
    let mut index = [0usize; 5];
    for (slot, (name, aliases)) in index.iter_mut().zip(COLUMNS.iter()) {
        *slot = headers
            .iter()
            .position(|h| aliases.iter().any(|a| h.eq_ignore_ascii_case(a)))
            .ok_or_else(|| Error::MissingColumn((*name).to_string()))?;
    }
    let [i_platform, i_content, i_application, i_ground, i_category] = index;

    let wanted_platform = filter.platform.as_deref().map(str::to_ascii_lowercase);
    let mut report = IngestReport::default();
    for row in csv.records() {
        let row = row?;
        report.rows_read += 1;
        let field = |i: usize| row.get(i).unwrap_or("");
        let platform = field(i_platform);
        if let Some(want) = &wanted_platform {
            if platform.to_ascii_lowercase() != *want {
                report.other_platform += 1;
                continue;
            }
        }
        let ground = DecisionGround::parse(field(i_ground));
        if filter.require_illegal_ground && ground != DecisionGround::Illegal {
            report.wrong_ground += 1;
            continue;
        }
        let (content_date, application_date) = match (
            parse_date(field(i_content)),
            parse_date(field(i_application)),
        ) {
            (Some(c), Some(a)) => (c, a),
            _ => {
                let line = row.position().map_or(0, |p| p.line());
                debug!("line {line}: unparseable date, row skipped");
                report.unparseable_date += 1;
                continue;
            }
        };
        if content_date == SENTINEL_CONTENT_DATE {
            report.sentinel_date += 1;
            continue;
        }
        if application_date < content_date {
            report.negative_delay += 1;
            continue;
        }
        report.records.push(SorRecord {
            platform: platform.to_string(),
            content_date,
            application_date,
            decision_ground: ground,
            category: field(i_category).to_string(),
        });
    }
    Ok(report)
}

/// Writes `n` illegal-ground records whose whole-day delays are
/// `floor(Exp(tau))`, with content dates spread over 2024.
pub fn write_synthetic_sors<W: Write, R: Rng + ?Sized>(
    w: W,
    platform: &str,
    category: &str,
    tau: f64,
    n: usize,
    rng: &mut R,
) -> Result<()> {
    let exp = Exp::new(1.0 / tau).map_err(|e| Error::param(format!("tau {tau}: {e}")))?;
    let start = NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date");
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "platform",
        "content_date",
        "application_date",
        "decision_ground",
        "category",
    ])?;
    for _ in 0..n {
        let content = start + Days::new(rng.random_range(0..366));
        let delay: f64 = exp.sample(rng);
        let applied = content + Days::new(delay.floor() as u64);
        out.write_record([
            platform,
            &content.to_string(),
            &applied.to_string(),
            "DECISION_GROUND_ILLEGAL_CONTENT",
            category,
        ])?;
    }
    out.flush().map_err(|e| Error::io("<synthetic sors>", e))?;
    Ok(())
}

/// `YYYY-MM-DD`, optionally followed by a time of day which is ignored.
fn parse_date(raw: &str) -> Option<NaiveDate> {
    let day = raw.get(..10)?;
    let rest = &raw[10..];
    if !(rest.is_empty() || rest.starts_with(' ') || rest.starts_with('T')) {
        return None;
    }
    NaiveDate::parse_from_str(day, "%Y-%m-%d").ok()
}
