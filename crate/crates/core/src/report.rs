//! Verifier reports and CSV serialization helpers.

use std::fmt::Write as _;
use std::path::Path;

/// Outcome of one identity check: the identity name, the worst violation
/// observed, where it happened, and the tolerance it is judged against.
#[derive(Clone, Debug)]
pub struct VerifierReport {
    pub identity: String,
    pub max_violation: f64,
    pub witness_site: Option<usize>,
    pub tolerance: f64,
    pub params: Vec<(String, String)>,
}

impl VerifierReport {
    pub fn new(identity: impl Into<String>, tolerance: f64) -> Self {
        VerifierReport {
            identity: identity.into(),
            max_violation: 0.0,
            witness_site: None,
            tolerance,
            params: Vec::new(),
        }
    }

    /// Records a violation, keeping the worst one.
    pub fn observe(&mut self, violation: f64, site: usize) {
        if violation > self.max_violation {
            self.max_violation = violation;
            self.witness_site = Some(site);
        }
    }

    pub fn with_param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn pass(&self) -> bool {
        self.max_violation <= self.tolerance
    }

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.identity.clone(),
            fmt_f64(self.max_violation),
            self.witness_site.map(|s| s.to_string()).unwrap_or_default(),
            fmt_f64(self.tolerance),
            if self.pass() { "pass".into() } else { "fail".into() },
            self.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
        ]
    }

    pub const CSV_HEADER: [&'static str; 6] =
        ["identity", "max_violation", "witness_site", "tolerance", "verdict", "params"];
}

/// Deterministic float formatting used in all CSV output.
pub fn fmt_f64(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// Renders rows as CSV text. Values are plain (no quoting); callers keep
/// commas out of field content.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", header.join(","));
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Writes CSV to a file, creating parent directories.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, csv_text(header, rows))
}
