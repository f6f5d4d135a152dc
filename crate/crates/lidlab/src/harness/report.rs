//! Report rows and the CSV table they serialize to.
//!
//! One row summarizes one (protocol, attack, rule, confidence) cell. Rates
//! are stored as fractions in [0,1] and written as percentages with two
//! decimals; the two classification-rate columns only exist for transfer
//! rows and are empty otherwise.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use crate::attack::{AttackKind, DecisionRule};
use crate::error::{Error, Result};

/// Which evaluation protocol produced a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Oblivious,
    Ensemble,
    Transfer,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Oblivious => "oblivious",
            Protocol::Ensemble => "ensemble",
            Protocol::Transfer => "transfer",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oblivious" => Ok(Protocol::Oblivious),
            "ensemble" => Ok(Protocol::Ensemble),
            "transfer" => Ok(Protocol::Transfer),
            other => Err(Error::Config(format!("unknown protocol {other:?}"))),
        }
    }
}

/// One report-table row. `n` counts the evaluated adversarial examples
/// (test-split positives for oblivious/ensemble, source-successful transfers
/// for transfer); `dropped_degenerate` counts feature queries dropped for
/// degenerate neighborhoods while building the row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub protocol: Protocol,
    pub attack: AttackKind,
    pub rule: DecisionRule,
    pub kappa: f64,
    pub auc: f64,
    pub detection_rate: f64,
    pub post_detection_classification_rate: Option<f64>,
    pub classification_rate_wo_detection: Option<f64>,
    pub n: usize,
    pub dropped_degenerate: usize,
}

/// The fixed header every report file starts with.
pub const REPORT_HEADER: &str = "protocol,attack,rule,kappa,auc,detection_rate,\
post_detection_classification_rate,classification_rate_wo_detection,n,dropped_degenerate";

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
        return Err(Error::Config(format!(
            "report rate {name} must lie in [0,1], got {v}"
        )));
    }
    Ok(())
}

impl ReportRow {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::Config(format!(
                "report kappa must be finite and nonnegative, got {}",
                self.kappa
            )));
        }
        check_rate("auc", self.auc)?;
        check_rate("detection_rate", self.detection_rate)?;
        let is_transfer = self.protocol == Protocol::Transfer;
        match (
            self.post_detection_classification_rate,
            self.classification_rate_wo_detection,
        ) {
            (Some(post), Some(wo)) if is_transfer => {
                check_rate("post_detection_classification_rate", post)?;
                check_rate("classification_rate_wo_detection", wo)?;
            }
            (None, None) if !is_transfer => {}
            _ => {
                return Err(Error::Config(format!(
                    "classification-rate columns must be present exactly for transfer rows \
                     (protocol {})",
                    self.protocol.as_str()
                )));
            }
        }
        Ok(())
    }
}

fn fmt_rate(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn fmt_opt_rate(v: Option<f64>) -> String {
    v.map(fmt_rate).unwrap_or_default()
}

/// Render rows as the report CSV (header + one line per row).
pub fn format_report(rows: &[ReportRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("report rows"));
    }
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for row in rows {
        row.validate()?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.protocol.as_str(),
            row.attack.as_str(),
            row.rule.as_str(),
            row.kappa,
            fmt_rate(row.auc),
            fmt_rate(row.detection_rate),
            fmt_opt_rate(row.post_detection_classification_rate),
            fmt_opt_rate(row.classification_rate_wo_detection),
            row.n,
            row.dropped_degenerate,
        ));
    }
    Ok(out)
}

/// Write the report CSV to `path`.
pub fn emit_report(rows: &[ReportRow], path: &Path) -> Result<()> {
    let text = format_report(rows)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn bad_file(path: &Path, reason: String) -> Error {
    Error::MalformedFile {
        path: path.display().to_string(),
        reason,
    }
}

fn parse_rate(path: &Path, name: &str, field: &str) -> Result<f64> {
    let pct: f64 = field
        .parse()
        .map_err(|_| bad_file(path, format!("{name}: cannot parse {field:?}")))?;
    Ok(pct / 100.0)
}

/// Read a report CSV back into rows (percentages become fractions again).
pub fn parse_report(path: &Path) -> Result<Vec<ReportRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == REPORT_HEADER => {}
        other => {
            return Err(bad_file(
                path,
                format!("expected report header, got {other:?}"),
            ))
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(bad_file(
                path,
                format!("expected 10 fields, got {} in {line:?}", fields.len()),
            ));
        }
        let parse_opt = |name: &str, field: &str| -> Result<Option<f64>> {
            if field.is_empty() {
                Ok(None)
            } else {
                parse_rate(path, name, field).map(Some)
            }
        };
        let row = ReportRow {
            protocol: fields[0].parse()?,
            attack: fields[1].parse()?,
            rule: fields[2].parse()?,
            kappa: fields[3]
                .parse()
                .map_err(|_| bad_file(path, format!("kappa: cannot parse {:?}", fields[3])))?,
            auc: parse_rate(path, "auc", fields[4])?,
            detection_rate: parse_rate(path, "detection_rate", fields[5])?,
            post_detection_classification_rate: parse_opt(
                "post_detection_classification_rate",
                fields[6],
            )?,
            classification_rate_wo_detection: parse_opt(
                "classification_rate_wo_detection",
                fields[7],
            )?,
            n: fields[8]
                .parse()
                .map_err(|_| bad_file(path, format!("n: cannot parse {:?}", fields[8])))?,
            dropped_degenerate: fields[9].parse().map_err(|_| {
                bad_file(path, format!("dropped_degenerate: cannot parse {:?}", fields[9]))
            })?,
        };
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}
