//! Machine-readable run reports with stable field names. Every float is
//! rendered through the fixed 17-digit formatter so identical runs produce
//! byte-identical JSON.

use serde::Serialize;
use tq_core::fourier::fmt_f64_17;

#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub measured: String,
    pub tolerance: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub leakage: String,
    pub checks: Vec<CheckLine>,
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, seed: u64) -> Self {
        RunReport {
            command: command.to_string(),
            seed,
            leakage: fmt_f64_17(0.0),
            checks: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn set_leakage(&mut self, leakage: f64) {
        self.leakage = fmt_f64_17(leakage);
    }

    pub fn push_check(&mut self, name: &str, measured: f64, tolerance: f64) {
        self.checks.push(CheckLine {
            name: name.to_string(),
            passed: measured <= tolerance,
            measured: fmt_f64_17(measured),
            tolerance: fmt_f64_17(tolerance),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
