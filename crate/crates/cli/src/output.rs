//! Result records and their CSV/JSON files.

use std::path::{Path, PathBuf};

use bmpaw_core::stats::Estimate;
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::Point;

pub const HEADER: [&str; 15] = [
    "scenario_id",
    "alpha",
    "beta",
    "eta",
    "gamma",
    "eps1",
    "eps2",
    "r1",
    "r2",
    "rbar_policy",
    "metric",
    "value",
    "ci_low",
    "ci_high",
    "status",
];

/// Formats a float with 10 significant digits.
pub fn sig10(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // Decimal exponent after rounding to ten digits.
    let exp: i32 = format!("{v:.9e}")
        .split_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .expect("exponent form");
    if (-5..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        trim(format!("{v:.decimals$}"))
    } else {
        let s = format!("{v:.9e}");
        let (mantissa, exponent) = s.split_once('e').expect("exponent form");
        format!("{}e{exponent}", trim(mantissa.to_string()))
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// One output line: a metric at a fully specified parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub scenario_id: String,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub r1: f64,
    pub r2: f64,
    pub rbar_policy: String,
    pub metric: String,
    pub value: f64,
    pub ci: Option<(f64, f64)>,
    pub status: String,
}

impl Record {
    pub fn at(id: &str, p: &Point, metric: impl Into<String>, value: f64) -> Self {
        Self {
            scenario_id: id.to_string(),
            alpha: p.profile.alpha(),
            beta: p.profile.beta(),
            eta: p.profile.eta(),
            gamma: p.params.gamma,
            eps1: p.params.eps1,
            eps2: p.params.eps2,
            r1: p.params.r1,
            r2: p.params.r2,
            rbar_policy: p.params.rbar_policy.to_string(),
            metric: metric.into(),
            value,
            ci: None,
            status: "ok".into(),
        }
    }

    pub fn with_estimate(mut self, e: &Estimate) -> Self {
        self.value = e.mean;
        self.ci = Some((e.ci_low, e.ci_high));
        self
    }

    pub fn with_status(mut self, status: impl Into<String>) -> Self {
        self.status = status.into();
        self
    }

    fn fields(&self) -> [String; 15] {
        let (lo, hi) = match self.ci {
            Some((lo, hi)) => (sig10(lo), sig10(hi)),
            None => (String::new(), String::new()),
        };
        [
            self.scenario_id.clone(),
            sig10(self.alpha),
            sig10(self.beta),
            sig10(self.eta),
            sig10(self.gamma),
            sig10(self.eps1),
            sig10(self.eps2),
            sig10(self.r1),
            sig10(self.r2),
            self.rbar_policy.clone(),
            self.metric.clone(),
            sig10(self.value),
            lo,
            hi,
            self.status.clone(),
        ]
    }
}

/// Parses a formatted number back for the JSON mirror; non-finite values
/// become `null`.
fn json_number(s: &str) -> serde_json::Value {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => serde_json::json!(v),
        _ => serde_json::Value::Null,
    }
}

fn json_record(r: &Record) -> serde_json::Value {
    let f = r.fields();
    let mut map = serde_json::Map::new();
    for (k, (name, value)) in HEADER.iter().zip(f.iter()).enumerate() {
        let v = match k {
            0 | 9 | 10 | 14 => serde_json::Value::String(value.clone()),
            _ if value.is_empty() => serde_json::Value::Null,
            _ => json_number(value),
        };
        map.insert((*name).to_string(), v);
    }
    serde_json::Value::Object(map)
}

fn write_error(path: &Path, e: impl Into<std::io::Error>) -> CliError {
    CliError::Write {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| write_error(dir, e))
}

/// Writes `<stem>.csv` and `<stem>.json` in `dir`.
pub fn write_records(dir: &Path, stem: &str, records: &[Record]) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| write_error(&csv_path, e))?;
    w.write_record(HEADER)
        .map_err(|e| write_error(&csv_path, e))?;
    for r in records {
        w.write_record(r.fields())
            .map_err(|e| write_error(&csv_path, e))?;
    }
    w.flush().map_err(|e| write_error(&csv_path, e))?;

    let json_path = dir.join(format!("{stem}.json"));
    let doc: Vec<_> = records.iter().map(json_record).collect();
    write_json(&json_path, &doc)?;
    Ok(vec![csv_path, json_path])
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| write_error(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| write_error(path, e))
}

/// Writes a free-form table with its own header.
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_error(path, e))?;
    w.write_record(header).map_err(|e| write_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}
