//! Report assembly and serialization.

use std::fmt::Write as _;

use ambiguity::Estimate;
use serde::Serialize;

/// Row order of every report.
pub const ESTIMATORS: [&str; 9] = [
    "choquet_upper",
    "choquet_lower",
    "minimax_upper",
    "minimax_lower",
    "bsde_upper",
    "bsde_lower",
    "extremal_upper",
    "extremal_lower",
    "plain",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRow {
    pub estimator: String,
    /// `None` when the estimator does not apply to the payoff.
    pub value: Option<f64>,
    pub std_error: Option<f64>,
    /// Relative tolerance used when comparing this row to the others.
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EstimatorRow {
    pub fn new(name: &str, estimate: Option<Estimate>, tolerance: f64) -> Self {
        Self {
            estimator: name.to_string(),
            value: estimate.map(|e| e.value),
            std_error: estimate.map(|e| e.std_error),
            tolerance,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn estimate(&self) -> Option<Estimate> {
        Some(Estimate::new(self.value?, self.std_error.unwrap_or(0.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Runtime {
    pub threads: usize,
    pub n_paths: usize,
    pub path_steps: usize,
    pub fd_nodes: usize,
    pub fd_time_steps: usize,
    pub family_size: usize,
    pub choquet_levels: String,
    /// Wall-clock milliseconds per phase, in execution order.
    pub phases_ms: Vec<(String, u64)>,
    pub total_ms: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub payoff: String,
    pub seed: u64,
    pub estimators: Vec<EstimatorRow>,
    /// `|value_i - value_j|` in [`ESTIMATORS`] order.
    pub discrepancy: Vec<Vec<Option<f64>>>,
    pub checks: Vec<CheckOutcome>,
    pub runtime: Runtime,
}

impl Report {
    pub fn row(&self, name: &str) -> Option<&EstimatorRow> {
        self.estimators.iter().find(|r| r.estimator == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.row(name)?.value
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn failed_checks(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail).collect()
    }
}

pub fn discrepancy_matrix(rows: &[EstimatorRow]) -> Vec<Vec<Option<f64>>> {
    rows.iter()
        .map(|a| {
            rows.iter()
                .map(|b| Some((a.value? - b.value?).abs()))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" | "json-like" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}' (text, csv, json)")),
        }
    }
}

fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn emit(report: &Report, format: Format) -> Vec<u8> {
    match format {
        Format::Csv => emit_csv(report),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s.into_bytes()
        }
        Format::Text => emit_text(report),
    }
}

fn emit_csv(report: &Report) -> Vec<u8> {
    let mut s = String::from("estimator,value,std_error\n");
    for r in &report.estimators {
        let _ = writeln!(s, "{},{},{}", r.estimator, num(r.value), num(r.std_error));
    }
    s.into_bytes()
}

fn emit_text(report: &Report) -> Vec<u8> {
    let mut s = String::new();
    let _ = writeln!(s, "scenario {}  payoff {}  seed {}", report.scenario, report.payoff, report.seed);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<16} {:>14} {:>12} {:>9}  note", "estimator", "value", "std_error", "rel_tol");
    for r in &report.estimators {
        let value = r.value.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        let se = r.std_error.map_or("n/a".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(
            s,
            "{:<16} {:>14} {:>12} {:>9}  {}",
            r.estimator,
            value,
            se,
            format!("{:.4}", r.tolerance),
            r.note.as_deref().unwrap_or("")
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "discrepancy |a - b|");
    let short: Vec<String> = report.estimators.iter().map(|r| abbreviate(&r.estimator)).collect();
    let _ = write!(s, "{:<16}", "");
    for h in &short {
        let _ = write!(s, " {h:>9}");
    }
    let _ = writeln!(s);
    for (r, row) in report.estimators.iter().zip(&report.discrepancy) {
        let _ = write!(s, "{:<16}", r.estimator);
        for d in row {
            let cell = d.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            let _ = write!(s, " {cell:>9}");
        }
        let _ = writeln!(s);
    }
    if !report.checks.is_empty() {
        let _ = writeln!(s);
        let _ = writeln!(s, "checks");
        let width = report.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &report.checks {
            let _ = writeln!(s, "  {:<width$}  {:<14}  {}", c.name, c.status.as_str(), c.detail);
        }
    }
    let rt = &report.runtime;
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "paths {} x {} steps, family {}, levels {}, fd {} x {}, threads {}, {} ms",
        rt.n_paths, rt.path_steps, rt.family_size, rt.choquet_levels, rt.fd_nodes, rt.fd_time_steps, rt.threads, rt.total_ms
    );
    s.into_bytes()
}

fn abbreviate(name: &str) -> String {
    let (head, tail) = name.split_once('_').unwrap_or((name, ""));
    let head: String = head.chars().take(4).collect();
    match tail {
        "upper" => format!("{head}+"),
        "lower" => format!("{head}-"),
        _ => head,
    }
}
