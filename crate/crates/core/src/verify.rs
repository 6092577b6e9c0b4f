//! The acceptance suite: every closed form against its oracle, as a
//! structured, machine-readable report. Used by the `acceptance`
//! integration test and by `asep verify`.

use serde::Serialize;

/// One checked inequality inside a criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub label: String,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckLine {
    pub fn new(label: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        let pass = observed.abs() <= tolerance;
        CheckLine { label: label.into(), observed, tolerance, pass }
    }

    /// A check that passes when `observed <= tolerance` (both signed).
    pub fn upper_bound(label: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        let pass = observed <= tolerance;
        CheckLine { label: label.into(), observed, tolerance, pass }
    }

    /// An informational line that never gates.
    pub fn info(label: impl Into<String>, observed: f64) -> Self {
        CheckLine { label: label.into(), observed, tolerance: f64::INFINITY, pass: true }
    }
}

/// Result of one acceptance criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub wall_ms: u128,
    pub lines: Vec<CheckLine>,
    /// Populated when the criterion aborted with an error.
    pub error: Option<String>,
}

/// Full suite outcome.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub all_passed: bool,
    pub total_ms: u128,
    pub criteria: Vec<CriterionReport>,
}

impl SuiteReport {
    pub fn summary_lines(&self) -> Vec<String> {
        self.criteria
            .iter()
            .map(|c| {
                let status = if c.passed { "PASS" } else { "FAIL" };
                let detail = match &c.error {
                    Some(e) => format!(" [error: {e}]"),
                    None => {
                        let worst = c
                            .lines
                            .iter()
                            .filter(|l| l.tolerance.is_finite())
                            .map(|l| l.observed.abs() / l.tolerance.max(1e-300))
                            .fold(0.0f64, f64::max);
                        format!(" (worst margin ratio {worst:.2e})")
                    }
                };
                format!(
                    "criterion {:2} [{status}] {} — {:>6} ms{detail}",
                    c.id, c.name, c.wall_ms
                )
            })
            .collect()
    }
}

mod criteria;
pub use criteria::run_suite;
