//! CSV and JSON export of metric records.
//!
//! Floats are written in scientific notation with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{IsacError, Result};
use crate::harness::eval::MetricsRecord;

pub const CSV_HEADER: [&str; 10] =
    ["method", "omega_r", "threshold", "pfa_emp", "pmd", "ser", "rmse_deg", "n_detect", "n_eval", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn check_nonempty(records: &[MetricsRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(IsacError::InvalidInput("nothing to export: empty result set".into()));
    }
    Ok(())
}

pub fn to_csv(records: &[MetricsRecord]) -> Result<String> {
    check_nonempty(records)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.method.clone(),
            fmt_float(r.omega_r),
            fmt_float(r.threshold),
            fmt_float(r.pfa_emp),
            fmt_float(r.pmd),
            fmt_float(r.ser),
            r.rmse_deg.map(fmt_float).unwrap_or_default(),
            r.n_detect.to_string(),
            r.n_eval.to_string(),
            r.seed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| IsacError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn from_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(IsacError::InvalidInput(format!("unexpected CSV header {header:?}")));
    }
    let float = |s: &str| s.parse::<f64>().map_err(|e| IsacError::InvalidInput(format!("bad float {s:?}: {e}")));
    let int = |s: &str| s.parse::<u64>().map_err(|e| IsacError::InvalidInput(format!("bad integer {s:?}: {e}")));
    rd.records()
        .map(|row| {
            let row = row?;
            Ok(MetricsRecord {
                method: row[0].to_string(),
                omega_r: float(&row[1])?,
                threshold: float(&row[2])?,
                pfa_emp: float(&row[3])?,
                pmd: float(&row[4])?,
                ser: float(&row[5])?,
                rmse_deg: if row[6].is_empty() { None } else { Some(float(&row[6])?) },
                n_detect: int(&row[7])?,
                n_eval: int(&row[8])?,
                seed: int(&row[9])?,
            })
        })
        .collect()
}

/// JSON array of objects with the record field names; absent RMSE is `null`.
pub fn to_json(records: &[MetricsRecord]) -> Result<String> {
    check_nonempty(records)?;
    let mut out = String::from("[\n");
    for (i, r) in records.iter().enumerate() {
        let rmse = r.rmse_deg.map(fmt_float).unwrap_or_else(|| "null".into());
        let _ = write!(
            out,
            "  {{\"method\": {}, \"omega_r\": {}, \"threshold\": {}, \"pfa_emp\": {}, \"pmd\": {}, \"ser\": {}, \
             \"rmse_deg\": {}, \"n_detect\": {}, \"n_eval\": {}, \"seed\": {}}}",
            serde_json::to_string(&r.method)?,
            fmt_float(r.omega_r),
            fmt_float(r.threshold),
            fmt_float(r.pfa_emp),
            fmt_float(r.pmd),
            fmt_float(r.ser),
            rmse,
            r.n_detect,
            r.n_eval,
            r.seed
        );
        out.push_str(if i + 1 < records.len() { ",\n" } else { "\n" });
    }
    out.push_str("]\n");
    Ok(out)
}

pub fn from_json(text: &str) -> Result<Vec<MetricsRecord>> {
    Ok(serde_json::from_str(text)?)
}

pub fn export(records: &[MetricsRecord], path: &Path, format: Format) -> Result<()> {
    let text = match format {
        Format::Csv => to_csv(records)?,
        Format::Json => to_json(records)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}
