//! Check reports and their text and JSON forms.
//!
//! JSON layout (keys in this order):
//!
//! ```text
//! { "seed", "samples", "tol", "perturbation",
//!   "summary": { "passed", "failed", "skipped", "expectations_met" },
//!   "checks": [ { "name", "anchor", "expect", "verdict", "met", "residual",
//!                 "rows": [ { "name", "expect", "verdict", "met", "residual",
//!                             "points_tested", "points_skipped", "worst_point",
//!                             "reason", "details" } ] } ],
//!   "wall_time_s" }
//! ```
//!
//! Everything except `wall_time_s` is a function of the spec and seed.

use std::fmt::Write as _;

use serde::Serialize;

use crate::runner::CheckInfo;
use crate::spec::{Expectation, RunConfig};
use crate::verdict::{Detail, PredicateVerdict, Status};

#[derive(Clone, Debug, Serialize)]
pub struct RowOutcome {
    pub name: String,
    pub expect: Expectation,
    pub verdict: Status,
    pub met: bool,
    pub residual: f64,
    pub points_tested: usize,
    pub points_skipped: usize,
    pub worst_point: Option<Vec<f64>>,
    pub reason: Option<String>,
    pub details: Vec<Detail>,
}

impl RowOutcome {
    pub fn new(v: &PredicateVerdict, expect: Expectation, met: bool) -> Self {
        RowOutcome {
            name: v.name.clone(),
            expect,
            verdict: v.status,
            met,
            residual: v.max_residual,
            points_tested: v.points_tested,
            points_skipped: v.points_skipped,
            worst_point: v.worst_point.clone(),
            reason: v.reason.clone(),
            details: v.details.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub anchor: String,
    pub expect: Expectation,
    pub verdict: Status,
    pub met: bool,
    pub residual: f64,
    pub rows: Vec<RowOutcome>,
}

impl CheckOutcome {
    pub fn new(info: &CheckInfo, expect: Expectation, met: bool, rows: Vec<RowOutcome>) -> Self {
        let verdict = if rows.iter().any(|r| r.verdict == Status::Fail) {
            Status::Fail
        } else if rows.iter().all(|r| r.verdict == Status::Skip) {
            Status::Skip
        } else {
            Status::Pass
        };
        let residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
        CheckOutcome { name: info.name.to_string(), anchor: info.anchor.to_string(), expect, verdict, met, residual, rows }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub expectations_met: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub seed: u64,
    pub samples: usize,
    pub tol: f64,
    pub perturbation: Option<f64>,
    pub summary: Summary,
    pub checks: Vec<CheckOutcome>,
    pub wall_time_s: f64,
}

impl CheckReport {
    pub fn new(checks: Vec<CheckOutcome>, run: &RunConfig, wall_time_s: f64) -> Self {
        let count = |s: Status| checks.iter().filter(|c| c.verdict == s).count();
        let summary = Summary {
            passed: count(Status::Pass),
            failed: count(Status::Fail),
            skipped: count(Status::Skip),
            expectations_met: checks.iter().all(|c| c.met),
        };
        CheckReport {
            seed: run.seed,
            samples: run.samples,
            tol: run.tol,
            perturbation: run.perturbation,
            summary,
            checks,
            wall_time_s,
        }
    }

    pub fn all_met(&self) -> bool {
        self.summary.expectations_met
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

pub fn emit_report(report: &CheckReport, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Text => text(report),
    }
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::Skip => "skip",
    }
}

fn expect_word(e: Expectation) -> &'static str {
    match e {
        Expectation::Pass => "pass",
        Expectation::Fail => "fail",
    }
}

fn text(report: &CheckReport) -> String {
    let mut out = String::new();
    let width = report
        .checks
        .iter()
        .flat_map(|c| c.rows.iter().map(move |r| c.name.len() + r.name.len() + 1))
        .max()
        .unwrap_or(10)
        .max(10);
    let _ = writeln!(
        out,
        "seed {}  samples {}  tol {:e}{}",
        report.seed,
        report.samples,
        report.tol,
        report.perturbation.map(|a| format!("  perturbation {a}")).unwrap_or_default()
    );
    let _ = writeln!(out, "{:<width$}  {:>6}  {:>6}  {:>12}  {:>7}  {:>7}", "check/row", "expect", "result", "residual", "tested", "skipped");
    for c in &report.checks {
        let _ = writeln!(out, "{}  [{}]  {}", c.name, c.anchor, if c.met { "ok" } else { "UNEXPECTED" });
        for r in &c.rows {
            let label = format!("{}/{}", c.name, r.name);
            let _ = writeln!(
                out,
                "{:<width$}  {:>6}  {:>6}  {:>12.3e}  {:>7}  {:>7}{}",
                label,
                expect_word(r.expect),
                status_word(r.verdict),
                r.residual,
                r.points_tested,
                r.points_skipped,
                r.reason.as_ref().map(|s| format!("  ({s})")).unwrap_or_default()
            );
        }
    }
    let s = &report.summary;
    let _ = writeln!(
        out,
        "{} passed, {} failed, {} skipped; expectations {}; {:.2} s",
        s.passed,
        s.failed,
        s.skipped,
        if s.expectations_met { "met" } else { "NOT met" },
        report.wall_time_s
    );
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleEntry {
    pub label: String,
    pub points: usize,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub order: usize,
    pub step: f64,
    pub entries: Vec<OracleEntry>,
    pub max_relative_error: f64,
}

impl OracleReport {
    pub fn new(entries: Vec<OracleEntry>, order: usize, step: f64) -> Self {
        let max_relative_error = entries.iter().map(|e| e.max_relative_error).fold(0.0, f64::max);
        OracleReport { order, step, entries, max_relative_error }
    }

    pub fn emit(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
            Format::Text => {
                let mut out = String::new();
                let _ = writeln!(out, "derivative orders 1..={}  step {:e}", self.order, self.step);
                for e in &self.entries {
                    let _ = writeln!(out, "{:<32} {:>4} points  max rel. error {:.3e}", e.label, e.points, e.max_relative_error);
                }
                let _ = writeln!(out, "max relative error {:.3e}", self.max_relative_error);
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_valid() {
        let run = RunConfig { samples: 10, seed: 1, tol: 1e-8, min_valid_points: 5, jet_order: 2, perturbation: None };
        let r = CheckReport::new(Vec::new(), &run, 0.0);
        assert!(r.all_met());
        let v: serde_json::Value = serde_json::from_str(&emit_report(&r, Format::Json)).unwrap();
        assert_eq!(v["checks"].as_array().unwrap().len(), 0);
        assert!(emit_report(&r, Format::Text).contains("0 passed"));
    }
}
