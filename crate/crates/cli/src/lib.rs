//! Configuration, suites and reports behind the `lattice-nls` binary.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod suite;

pub use config::{Format, RunConfig, Suite};
pub use report::{emit_report, parse_report, render, Report};
pub use suite::run_suite;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<lattice_nls::Error> for CliError {
    fn from(e: lattice_nls::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Process exit code for a finished run: 0 when every hard check passed.
pub fn exit_code(report: &Report) -> i32 {
    if report.summary.pass {
        0
    } else {
        1
    }
}
