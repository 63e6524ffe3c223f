//! Check records and report serialization shared by the verification harness and the CLI.

use std::time::Instant;

use serde::Serialize;

/// Reals in CSV: 17 significant digits, `.` decimal point, no locale.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Where a check's reference value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// closed-form limit from the theory
    Theory,
    /// independent exact computation (enumeration, binomial series)
    Oracle,
    /// exact dynamic programming
    Exact,
    /// algebraic identity
    Identity,
    /// Monte Carlo estimate
    MonteCarlo,
}

/// One named comparison of a statistic against a reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub statistic: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub provenance: Provenance,
    pub runtime_s: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckResult {
    /// Passes iff `|statistic - reference| <= tolerance`.
    pub fn within(name: impl Into<String>, statistic: f64, reference: f64, tolerance: f64, provenance: Provenance) -> Self {
        let passed = (statistic - reference).abs() <= tolerance;
        Self::flag(name, statistic, reference, tolerance, passed, provenance)
    }

    pub fn flag(
        name: impl Into<String>,
        statistic: f64,
        reference: f64,
        tolerance: f64,
        passed: bool,
        provenance: Provenance,
    ) -> Self {
        Self { name: name.into(), statistic, reference, tolerance, passed, provenance, runtime_s: 0.0, detail: String::new() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }

    pub fn timed(mut self, since: Instant) -> Self {
        self.runtime_s = since.elapsed().as_secs_f64();
        self
    }
}

/// A named list of checks with optional tabulated rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub name: String,
    pub checks: Vec<CheckResult>,
    /// free-form table rows, e.g. convergence sequences
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<serde_json::Value>,
}

impl RunReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Self::default() }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: RunReport) {
        self.checks.extend(other.checks);
        self.rows.extend(other.rows);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// CSV with columns `name,statistic,reference,tolerance,passed,provenance,runtime_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,statistic,reference,tolerance,passed,provenance,runtime_s\n");
        for c in &self.checks {
            let prov = serde_json::to_value(c.provenance).expect("enum serializes");
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.name,
                fmt_real(c.statistic),
                fmt_real(c.reference),
                fmt_real(c.tolerance),
                c.passed,
                prov.as_str().unwrap_or_default(),
                fmt_real(c.runtime_s)
            ));
        }
        out
    }
}
