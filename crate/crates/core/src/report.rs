//! Report rows and their CSV / JSON serialization.
//!
//! Both formats carry the columns
//! `scenario,s,t,functional,mean,stderr,z,n_paths,verdict` with numbers at
//! nine significant digits. Non-finite numbers are written as `NaN`/`inf` in
//! CSV and as `null` in JSON; `null` reads back as NaN.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::verify::MartingaleTestReport;

pub const CSV_HEADER: [&str; 9] = ["scenario", "s", "t", "functional", "mean", "stderr", "z", "n_paths", "verdict"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Diagnostic row that does not enter the scenario verdict.
    Info,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Info => "info",
        })
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pass" => Ok(Verdict::Pass),
            "fail" => Ok(Verdict::Fail),
            "info" => Ok(Verdict::Info),
            other => Err(Error::Report(format!("unknown verdict `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config("format", format!("expected csv or json, got `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    #[serde(serialize_with = "ser_num", deserialize_with = "de_num")]
    pub s: f64,
    #[serde(serialize_with = "ser_num", deserialize_with = "de_num")]
    pub t: f64,
    pub functional: String,
    #[serde(serialize_with = "ser_num", deserialize_with = "de_num")]
    pub mean: f64,
    #[serde(serialize_with = "ser_num", deserialize_with = "de_num")]
    pub stderr: f64,
    #[serde(serialize_with = "ser_num", deserialize_with = "de_num")]
    pub z: f64,
    pub n_paths: u64,
    pub verdict: Verdict,
}

/// Rounds to nine significant digits, the precision of both formats.
pub fn round9(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.8e}").parse().expect("formatted float parses")
    } else {
        x
    }
}

fn ser_num<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(round9(*x))
    } else {
        s.serialize_none()
    }
}

fn de_num<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// An ordered list of rows; the order is the emission order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one row per suite entry under the given scenario label.
    pub fn push_suite(&mut self, scenario: &str, suite: &MartingaleTestReport) {
        for e in &suite.entries {
            self.rows.push(ReportRow {
                scenario: scenario.to_string(),
                s: e.s,
                t: e.t,
                functional: e.functional.clone(),
                mean: e.stat.mean,
                stderr: e.stat.stderr,
                z: e.stat.z,
                n_paths: e.stat.n_paths as u64,
                verdict: if e.pass { Verdict::Pass } else { Verdict::Fail },
            });
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.scenario.clone(),
                fmt_num(r.s),
                fmt_num(r.t),
                r.functional.clone(),
                fmt_num(r.mean),
                fmt_num(r.stderr),
                fmt_num(r.z),
                r.n_paths.to_string(),
                r.verdict.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.rows)?;
        s.push('\n');
        Ok(s)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x:.8e}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Report(e.to_string())
}

/// Writes the rendered report to `path`, or to stdout when `path` is `None`.
pub fn emit_report(report: &Report, format: Format, path: Option<&Path>) -> Result<()> {
    let text = report.render(format)?;
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn parse_num(field: &str, line: usize, name: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Report(format!("line {line}: `{name}` is not a number: `{field}`")))
}

pub fn parse_csv_report(text: &str) -> Result<Report> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Report(format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        if rec.len() != CSV_HEADER.len() {
            return Err(Error::Report(format!("line {line}: expected 9 fields, got {}", rec.len())));
        }
        rows.push(ReportRow {
            scenario: rec[0].to_string(),
            s: parse_num(&rec[1], line, "s")?,
            t: parse_num(&rec[2], line, "t")?,
            functional: rec[3].to_string(),
            mean: parse_num(&rec[4], line, "mean")?,
            stderr: parse_num(&rec[5], line, "stderr")?,
            z: parse_num(&rec[6], line, "z")?,
            n_paths: rec[7]
                .trim()
                .parse()
                .map_err(|_| Error::Report(format!("line {line}: `n_paths` is not a count: `{}`", &rec[7])))?,
            verdict: rec[8].parse()?,
        });
    }
    Ok(Report { rows })
}

pub fn parse_json_report(text: &str) -> Result<Report> {
    let rows: Vec<ReportRow> = serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
    Ok(Report { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mean: f64) -> ReportRow {
        ReportRow {
            scenario: "bridge".into(),
            s: 0.2,
            t: 0.6,
            functional: "min(I_s,2)".into(),
            mean,
            stderr: 0.001234567891,
            z: mean / 0.001234567891,
            n_paths: 50000,
            verdict: Verdict::Pass,
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        assert_eq!(Report::new().to_csv().unwrap(), "scenario,s,t,functional,mean,stderr,z,n_paths,verdict\n");
    }

    #[test]
    fn one_row_csv() {
        let r = Report { rows: vec![row(0.5)] };
        let text = r.to_csv().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[1],
            "bridge,2.00000000e-1,6.00000000e-1,\"min(I_s,2)\",5.00000000e-1,1.23456789e-3,4.05000003e2,50000,pass"
        );
    }

    #[test]
    fn csv_round_trip() {
        let r = Report { rows: vec![row(0.123456789123), row(f64::NAN)] };
        let back = parse_csv_report(&r.to_csv().unwrap()).unwrap();
        assert_eq!(back.rows[0].mean, round9(0.123456789123));
        assert!(back.rows[1].mean.is_nan());
        assert_eq!(back.rows[0].functional, "min(I_s,2)");
    }

    #[test]
    fn json_round_trip_is_bit_equal_at_nine_digits() {
        let r = Report { rows: vec![row(-3.14159265358979e-7), row(f64::INFINITY)] };
        let back = parse_json_report(&r.to_json().unwrap()).unwrap();
        let a = &back.rows[0];
        assert_eq!(a.mean.to_bits(), round9(-3.14159265358979e-7).to_bits());
        assert_eq!(a.stderr.to_bits(), round9(0.001234567891).to_bits());
        assert_eq!(a.s, 0.2);
        assert!(back.rows[1].mean.is_nan());
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_csv_report("a,b\n1,2\n"), Err(Error::Report(_))));
        let bad = "scenario,s,t,functional,mean,stderr,z,n_paths,verdict\nx,1,2,f,oops,1,1,3,pass\n";
        assert!(matches!(parse_csv_report(bad), Err(Error::Report(_))));
        assert!(matches!(parse_json_report("{"), Err(Error::Report(_))));
    }
}
