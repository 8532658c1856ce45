//! Machine-readable verification reports: one JSON object on standard
//! output, a human summary on standard error. Identical configs (including
//! the seed) produce byte-identical reports apart from the wall-clock field.

use serde::Serialize;
use serde_json::Value;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A single verified identity.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub id: String,
    /// The identity this residual measures, in plain notation.
    pub identity: String,
    pub max_residual: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<Vec<f64>>,
    /// True when the config declared this check as expected to fail.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub expect_violation: bool,
    pub pass: bool,
}

impl Check {
    pub fn new(id: &str, identity: &str, max_residual: f64, tolerance: f64) -> Self {
        Check {
            id: id.into(),
            identity: identity.into(),
            max_residual,
            tolerance,
            location: None,
            expect_violation: false,
            pass: max_residual <= tolerance,
        }
    }

    pub fn at(mut self, location: Vec<f64>) -> Self {
        self.location = Some(location);
        self
    }

    /// Invert the pass criterion: the residual is expected to exceed the
    /// tolerance (a deliberately violated hypothesis).
    pub fn expect_violation(mut self) -> Self {
        self.expect_violation = true;
        self.pass = self.max_residual > self.tolerance;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub grid: usize,
    pub config: Value,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    pub pass: bool,
    pub wall_ms: u64,
}

impl Report {
    pub fn new(command: &str, config: Value, seed: u64, grid: usize) -> Self {
        Report {
            schema: crate::config::SCHEMA.into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
            grid,
            config,
            checks: Vec::new(),
            payload: None,
            error: None,
            pass: true,
            wall_ms: 0,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.pass &= check.pass;
        self.checks.push(check);
    }

    pub fn fail_with(&mut self, kind: &str, message: String, residual: Option<f64>) {
        self.error = Some(ErrorInfo {
            kind: kind.into(),
            message,
            residual,
        });
        self.pass = false;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }

    /// Human summary for standard error.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{} ({} checks, seed {})\n",
            self.command,
            self.checks.len(),
            self.seed
        ));
        for c in &self.checks {
            let status = if c.pass { "ok" } else { "FAIL" };
            let expect = if c.expect_violation {
                " [expected violation]"
            } else {
                ""
            };
            out.push_str(&format!(
                "  {:<34} {:>12.3e} <= {:>8.1e}  {status}{expect}\n",
                c.id, c.max_residual, c.tolerance
            ));
        }
        if let Some(err) = &self.error {
            out.push_str(&format!("  error: {} ({})\n", err.message, err.kind));
        }
        out.push_str(if self.pass { "PASS\n" } else { "FAIL\n" });
        out
    }
}
