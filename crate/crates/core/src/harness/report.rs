use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::eval::EvalReport;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

/// One emitted file: a bare file name and its contents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

pub const SUMMARY_CSV: &str = "summary.csv";
pub const REPORT_JSON: &str = "report.json";

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn json_str(s: &str) -> String {
    serde_json::Value::from(s).to_string()
}

/// Serializes reports. CSV gives one `<tracker>.csv` trace per report, with
/// IOU rows for frames `1..T`, plus `summary.csv`; JSON gives a single
/// `report.json`. Floats carry six decimals. Every report needs a non-empty
/// trace, and tracker names must be distinct for CSV output.
pub fn emit_report(reports: &[EvalReport], format: ReportFormat) -> Result<Vec<ReportFile>> {
    if reports.is_empty() {
        return Err(Error::Empty("report list"));
    }
    if let Some(r) = reports.iter().find(|r| r.trace.is_empty()) {
        return Err(Error::Precondition(format!(
            "report for '{}' has an empty trace",
            r.tracker
        )));
    }
    match format {
        ReportFormat::Csv => emit_csv(reports),
        ReportFormat::Json => Ok(vec![ReportFile {
            name: REPORT_JSON.into(),
            bytes: emit_json(reports).into_bytes(),
        }]),
    }
}

fn emit_csv(reports: &[EvalReport]) -> Result<Vec<ReportFile>> {
    let mut files = Vec::with_capacity(reports.len() + 1);
    let mut summary = String::from("tracker,mean_iou,std_iou,frames,oracle_calls\n");
    for r in reports {
        let name = format!("{}.csv", file_stem(&r.tracker));
        if name == SUMMARY_CSV || files.iter().any(|f: &ReportFile| f.name == name) {
            return Err(Error::Precondition(format!("duplicate report file name '{name}'")));
        }
        let mut trace = String::from("frame,iou\n");
        for (i, v) in r.trace.iter().enumerate() {
            let _ = writeln!(trace, "{},{v:.6}", i + 1);
        }
        files.push(ReportFile {
            name,
            bytes: trace.into_bytes(),
        });
        let _ = writeln!(
            summary,
            "{},{:.6},{:.6},{},{}",
            csv_field(&r.tracker),
            r.mean_iou,
            r.std_iou,
            r.frames(),
            r.oracle_calls
        );
    }
    files.push(ReportFile {
        name: SUMMARY_CSV.into(),
        bytes: summary.into_bytes(),
    });
    Ok(files)
}

fn emit_json(reports: &[EvalReport]) -> String {
    let mut out = String::from("{\"reports\":[");
    for (n, r) in reports.iter().enumerate() {
        if n > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"tracker\":{},\"sequence\":{},\"mean_iou\":{:.6},\"std_iou\":{:.6},\"frames\":{},\"oracle_calls\":{},\"wall_time_s\":{:.6},\"complete\":{},",
            json_str(&r.tracker),
            json_str(&r.sequence),
            r.mean_iou,
            r.std_iou,
            r.frames(),
            r.oracle_calls,
            r.wall_time.as_secs_f64(),
            r.incomplete.is_none()
        );
        match &r.incomplete {
            Some(why) => {
                let _ = write!(out, "\"error\":{},", json_str(why));
            }
            None => out.push_str("\"error\":null,"),
        }
        out.push_str("\"metadata\":{");
        for (i, (k, v)) in r.metadata.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}:{}", json_str(k), json_str(v));
        }
        out.push_str("},\"trace\":[");
        for (i, v) in r.trace.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{{\"frame\":{},\"iou\":{v:.6}}}", i + 1);
        }
        out.push_str("]}");
    }
    out.push_str("]}\n");
    out
}

/// Writes emitted files into `dir`, creating it if needed.
pub fn write_report_files(dir: &Path, files: &[ReportFile]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for f in files {
        fs::write(dir.join(&f.name), &f.bytes)?;
    }
    Ok(())
}
