//! JSON and CSV output. Every file carries the schema version: JSON in a
//! field, CSV in a leading `# schema_version: N` comment line.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::ExperimentReport;
use crate::game::GameTrace;
use crate::scenario::SCHEMA_VERSION;

pub const REPORT_JSON: &str = "report.json";
pub const GAME_TRACE_CSV: &str = "game_trace.csv";
pub const GP_TRACE_CSV: &str = "gp_trace.csv";
pub const ENERGY_CSV: &str = "energy.csv";
pub const ACCURACY_CSV: &str = "accuracy.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::invalid("format", format!("expected json or csv, got {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Csv => "csv",
        })
    }
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn parse_report(text: &str) -> Result<ExperimentReport> {
    let report: ExperimentReport = serde_json::from_str(text)?;
    if report.schema_version != SCHEMA_VERSION {
        return Err(Error::Serde(format!(
            "report schema version {} (expected {SCHEMA_VERSION})",
            report.schema_version
        )));
    }
    Ok(report)
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    parse_report(&fs::read_to_string(path)?)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut out = format!("# schema_version: {SCHEMA_VERSION}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(header).map_err(csv_error)?;
        for row in rows {
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush()?;
    }
    Ok(out)
}

fn num(x: f64) -> String {
    // Shortest representation that parses back to the same f64.
    format!("{x:?}")
}

/// One row per sampled client; `from`/`to` are empty when it stayed put.
pub fn game_trace_csv(trace: &GameTrace) -> Result<Vec<u8>> {
    let rows = trace.entries.iter().map(|e| {
        let (from, to) = match e.switch {
            Some(s) => (s.from.to_string(), s.to.to_string()),
            None => (String::new(), String::new()),
        };
        vec![e.iteration.to_string(), e.client.to_string(), from, to, num(e.avg_js)]
    });
    csv_bytes(&["iteration", "client", "from", "to", "avg_js"], rows)
}

pub fn gp_trace_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let rows = report.methods.iter().flat_map(|r| {
        let objective = r.plan.gp_trace.as_ref().map(|t| t.objective.as_slice()).unwrap_or(&[]);
        objective
            .iter()
            .enumerate()
            .map(move |(i, &v)| vec![r.method.to_string(), i.to_string(), num(v)])
    });
    csv_bytes(&["method", "iteration", "objective"], rows)
}

pub fn energy_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let rows = report.methods.iter().map(|r| {
        let s = &r.summary;
        vec![
            r.method.to_string(),
            num(s.tx_energy),
            num(s.energy),
            num(s.latency),
            num(s.avg_js),
            num(s.utility),
            s.feasible.to_string(),
        ]
    });
    csv_bytes(
        &["method", "tx_energy", "energy", "latency", "avg_js", "utility", "feasible"],
        rows,
    )
}

pub fn accuracy_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let rows = report.methods.iter().flat_map(|r| {
        r.accuracy.iter().flatten().map(move |p| {
            vec![
                r.method.to_string(),
                p.round.to_string(),
                num(p.accuracy),
                num(p.avg_js),
            ]
        })
    });
    csv_bytes(&["method", "round", "accuracy", "avg_js"], rows)
}

/// Reads a CSV written by this module: checks the version line and returns
/// the header and data rows.
pub fn read_csv(bytes: &[u8]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))?;
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let version = first
        .strip_prefix("# schema_version:")
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| Error::Serde("missing schema_version line".into()))?;
    if version != SCHEMA_VERSION {
        return Err(Error::Serde(format!("csv schema version {version} (expected {SCHEMA_VERSION})")));
    }
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    let header = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(csv_error)?;
    Ok((header, rows))
}

/// Writes the report to `dir` and returns the paths written. JSON emits the
/// full report; CSV emits the plot tables (the game trace only when present,
/// accuracy only when any method has a curve).
pub fn emit_report(report: &ExperimentReport, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    match format {
        Format::Json => put(REPORT_JSON, to_json(report)?.into_bytes())?,
        Format::Csv => {
            if let Some(trace) = &report.game_trace {
                put(GAME_TRACE_CSV, game_trace_csv(trace)?)?;
            }
            put(GP_TRACE_CSV, gp_trace_csv(report)?)?;
            put(ENERGY_CSV, energy_csv(report)?)?;
            if report.methods.iter().any(|r| r.accuracy.is_some()) {
                put(ACCURACY_CSV, accuracy_csv(report)?)?;
            }
        }
    }
    Ok(written)
}
