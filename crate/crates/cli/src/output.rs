//! Result rows and their table, CSV and JSON forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const SCHEMA: &str = "drawdown-lab/1";

/// One evaluated grid point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub inputs: BTreeMap<String, f64>,
    pub value: Option<f64>,
    /// Error estimate, or standard error for Monte Carlo values.
    pub error: Option<f64>,
    pub method: Option<String>,
    /// `ok`, or the name of the error that stopped this row.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub elapsed_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_effective: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub richardson_shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub richardson_se: Option<f64>,
}

impl Row {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Everything one invocation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub target: String,
    pub model: String,
    /// Input columns in grid order.
    pub parameters: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// `PASS` or `FAIL` for verification runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<String>,
    pub rows: Vec<Row>,
}

/// Formats with six significant digits.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.5e}")
    }
}

fn exact(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json(report: &Report) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

pub fn from_json(text: &str) -> Result<Report> {
    Ok(serde_json::from_str(text)?)
}

const OPTIONAL: [&str; 10] = [
    "branch",
    "reference",
    "reference_error",
    "reference_method",
    "deviation",
    "tolerance",
    "pass",
    "n_effective",
    "richardson_shift",
    "richardson_se",
];

fn optional_cell(row: &Row, column: &str) -> Option<String> {
    match column {
        "branch" => row.branch.clone(),
        "reference" => row.reference.map(exact),
        "reference_error" => row.reference_error.map(exact),
        "reference_method" => row.reference_method.clone(),
        "deviation" => row.deviation.map(exact),
        "tolerance" => row.tolerance.map(exact),
        "pass" => row.pass.map(|p| p.to_string()),
        "n_effective" => row.n_effective.map(|n| n.to_string()),
        "richardson_shift" => row.richardson_shift.map(exact),
        "richardson_se" => row.richardson_se.map(exact),
        _ => None,
    }
}

/// CSV with a header row; floats carry 17 significant digits.
pub fn to_csv(report: &Report) -> Result<String> {
    let extra: Vec<&str> =
        OPTIONAL.into_iter().filter(|c| report.rows.iter().any(|r| optional_cell(r, c).is_some())).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = report.parameters.iter().map(String::as_str).collect();
    header.extend(["value", "error", "method", "status", "message", "elapsed_ms"]);
    header.extend(&extra);
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec: Vec<String> =
            report.parameters.iter().map(|p| row.inputs.get(p).map(|v| exact(*v)).unwrap_or_default()).collect();
        rec.push(row.value.map(exact).unwrap_or_default());
        rec.push(row.error.map(exact).unwrap_or_default());
        rec.push(row.method.clone().unwrap_or_default());
        rec.push(row.status.clone());
        rec.push(row.message.clone().unwrap_or_default());
        rec.push(exact(row.elapsed_ms));
        for c in &extra {
            rec.push(optional_cell(row, c).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
}

/// Reads rows written by [`to_csv`]; columns other than the known ones are inputs.
pub fn from_csv(text: &str) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut row = Row::default();
        for (name, cell) in header.iter().zip(rec.iter()) {
            let num = || -> Result<Option<f64>> {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse().map(Some).map_err(|_| invalid(format!("column {name}: bad number '{cell}'")))
                }
            };
            let text = || (!cell.is_empty()).then(|| cell.to_string());
            match name {
                "value" => row.value = num()?,
                "error" => row.error = num()?,
                "method" => row.method = text(),
                "status" => row.status = cell.to_string(),
                "message" => row.message = text(),
                "elapsed_ms" => row.elapsed_ms = num()?.unwrap_or(0.0),
                "branch" => row.branch = text(),
                "reference" => row.reference = num()?,
                "reference_error" => row.reference_error = num()?,
                "reference_method" => row.reference_method = text(),
                "deviation" => row.deviation = num()?,
                "tolerance" => row.tolerance = num()?,
                "pass" => {
                    row.pass = match cell {
                        "" => None,
                        "true" => Some(true),
                        "false" => Some(false),
                        _ => return Err(invalid(format!("column pass: bad flag '{cell}'"))),
                    }
                }
                "n_effective" => {
                    row.n_effective = if cell.is_empty() {
                        None
                    } else {
                        Some(cell.parse().map_err(|_| invalid(format!("column n_effective: '{cell}'")))?)
                    }
                }
                "richardson_shift" => row.richardson_shift = num()?,
                "richardson_se" => row.richardson_se = num()?,
                input => {
                    if let Some(v) = num()? {
                        row.inputs.insert(input.to_string(), v);
                    }
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Aligned human-readable table.
pub fn to_table(report: &Report) -> String {
    let compare = report.rows.iter().any(|r| r.reference.is_some());
    let mut header: Vec<String> = report.parameters.clone();
    header.extend(["value", "error", "method"].map(String::from));
    if compare {
        header.extend(["reference", "deviation", "tolerance", "pass"].map(String::from));
    }
    header.push("status".into());
    let opt = |v: Option<f64>| v.map(sig6).unwrap_or_else(|| "-".into());
    let mut cells: Vec<Vec<String>> = vec![header];
    for row in &report.rows {
        let mut line: Vec<String> = report.parameters.iter().map(|p| opt(row.inputs.get(p).copied())).collect();
        line.push(opt(row.value));
        line.push(opt(row.error));
        line.push(row.method.clone().unwrap_or_else(|| "-".into()));
        if compare {
            line.push(opt(row.reference));
            line.push(opt(row.deviation));
            line.push(opt(row.tolerance));
            line.push(match row.pass {
                Some(true) => "PASS".into(),
                Some(false) => "FAIL".into(),
                None => "-".into(),
            });
        }
        line.push(match &row.message {
            Some(m) => format!("{}: {m}", row.status),
            None => row.status.clone(),
        });
        cells.push(line);
    }
    let cols = cells[0].len();
    let widths: Vec<usize> =
        (0..cols).map(|c| cells.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for line in &cells {
        let parts: Vec<String> = line.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    }
    if let Some(v) = &report.verdict {
        out.push_str(&format!("{}: {v}\n", report.target));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.39322386648296370), "0.393224");
        assert_eq!(sig6(12.3456789), "12.3457");
        assert_eq!(sig6(1.0), "1.00000");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
        assert_eq!(sig6(0.0), "0");
    }
}
