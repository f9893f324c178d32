use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use lattice_nls::{ResidualReport, Status};
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: bool,
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Hard checks go in `checks` and decide the summary; diagnostics only ever
/// appear among the scalars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: RunConfig,
    pub checks: Vec<ResidualReport>,
    pub scalars: BTreeMap<String, serde_json::Value>,
    pub assumptions: Vec<String>,
    pub summary: Summary,
}

impl Report {
    pub fn new(config: RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config,
            checks: Vec::new(),
            scalars: BTreeMap::new(),
            assumptions: Vec::new(),
            summary: Summary {
                pass: true,
                total: 0,
                passed: 0,
                failed: 0,
                errors: 0,
                warnings: Vec::new(),
            },
        }
    }

    /// Applies the configured tolerance for the check's name and stores it.
    pub fn push(&mut self, check: ResidualReport) {
        let tol = self.config.tolerance(&check.name);
        let check = if tol.is_finite() { check.with_tolerance(tol) } else { check };
        self.checks.push(check);
    }

    pub fn scalar(&mut self, key: impl Into<String>, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.scalars.insert(key.into(), v);
    }

    pub fn assume(&mut self, note: impl Into<String>) {
        let note = note.into();
        if !self.assumptions.contains(&note) {
            self.assumptions.push(note);
        }
    }

    pub fn warn(&mut self, warning: impl Into<String>) {
        self.summary.warnings.push(warning.into());
    }

    pub fn finish(&mut self) {
        let count = |s: Status| self.checks.iter().filter(|c| c.status == s).count();
        self.summary.total = self.checks.len();
        self.summary.passed = count(Status::Pass);
        self.summary.failed = count(Status::Fail);
        self.summary.errors = count(Status::Error);
        self.summary.pass = self.summary.passed == self.summary.total;
        if self.checks.is_empty() {
            self.warn("no checks were run");
        }
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    name: &'a str,
    status: Status,
    residual: Option<f64>,
    tolerance: f64,
    lambda_re: Option<f64>,
    lambda_im: Option<f64>,
    mu_re: Option<f64>,
    mu_im: Option<f64>,
    sites: Option<usize>,
    cutoff: Option<usize>,
    kappa: Option<f64>,
    delta: Option<f64>,
    sector: Option<usize>,
    site: Option<usize>,
    message: &'a str,
}

pub fn to_csv(report: &Report) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &report.checks {
        let p = &c.params;
        w.serialize(CsvRow {
            name: &c.name,
            status: c.status,
            residual: c.residual.is_finite().then_some(c.residual),
            tolerance: c.tolerance,
            lambda_re: p.lambda.map(|z| z.re),
            lambda_im: p.lambda.map(|z| z.im),
            mu_re: p.mu.map(|z| z.re),
            mu_im: p.mu.map(|z| z.im),
            sites: p.sites,
            cutoff: p.cutoff,
            kappa: p.kappa,
            delta: p.delta,
            sector: p.sector,
            site: p.site,
            message: c.message.as_deref().unwrap_or(""),
        })
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    if report.checks.is_empty() {
        w.write_record([
            "name", "status", "residual", "tolerance", "lambda_re", "lambda_im", "mu_re", "mu_im", "sites",
            "cutoff", "kappa", "delta", "sector", "site", "message",
        ])
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

pub fn render(report: &Report, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => to_csv(report),
    }
}

/// Writes the report to `path`, or to stdout when no path is given.
pub fn emit_report(report: &Report, format: Format, path: Option<&Path>) -> Result<(), CliError> {
    let text = render(report, format)?;
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string())),
    }
}

pub fn parse_report(json: &str) -> Result<Report, CliError> {
    serde_json::from_str(json).map_err(|e| CliError::Config(e.to_string()))
}
