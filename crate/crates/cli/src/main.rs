use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches, Command};
use lattice_nls_cli::config::DEFAULT_TOLERANCES;
use lattice_nls_cli::{emit_report, exit_code, run_suite, CliError, Format, RunConfig, Suite};

fn tol_flag(check: &str) -> String {
    format!("tol-{}", check.replace('_', "-"))
}

fn suite_command(suite: Suite) -> Command {
    let about = match suite {
        Suite::Verify => "RTT, transfer commutativity, quantum determinant, q_n/Lax form, su(2), classical det and r-bracket",
        Suite::Bethe => "Bethe roots, eigenpairs and the exact-diagonalisation cross-check",
        Suite::Hamiltonian => "spectral H_q, energy sum rule and local-density diagnostics",
        Suite::Classical => "RK4 evolution and conservation of τ(λ) and H_c",
        Suite::Sweep => "continuum limits E(μ) → μ² and H_c → continuum energy",
    };
    let mut cmd = Command::new(suite.name())
        .about(about)
        .arg(Arg::new("config").long("config").value_parser(value_parser!(PathBuf)).help("JSON or TOML run configuration"))
        .arg(Arg::new("kappa").long("kappa").value_parser(value_parser!(f64)))
        .arg(Arg::new("delta").long("delta").value_parser(value_parser!(f64)))
        .arg(Arg::new("sites").long("sites").value_parser(value_parser!(usize)))
        .arg(Arg::new("cutoff").long("cutoff").value_parser(value_parser!(usize)))
        .arg(
            Arg::new("sector")
                .long("sector")
                .value_parser(value_parser!(usize))
                .action(clap::ArgAction::Append)
                .help("particle-number sector; repeat for several"),
        )
        .arg(Arg::new("seed").long("seed").value_parser(value_parser!(u64)))
        .arg(Arg::new("out").long("out").value_parser(value_parser!(PathBuf)).help("report path (stdout if omitted)"))
        .arg(Arg::new("format").long("format").value_parser(["json", "csv"]));
    for (check, default) in DEFAULT_TOLERANCES {
        cmd = cmd.arg(
            Arg::new(tol_flag(check))
                .long(tol_flag(check))
                .value_parser(value_parser!(f64))
                .help(format!("tolerance for `{check}` (default {default:e})")),
        );
    }
    cmd
}

fn build_config(suite: Suite, m: &ArgMatches) -> Result<RunConfig, CliError> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.suite = suite;
    if let Some(&v) = m.get_one::<f64>("kappa") {
        cfg.kappa = v;
    }
    if let Some(&v) = m.get_one::<f64>("delta") {
        cfg.delta = v;
    }
    if let Some(&v) = m.get_one::<usize>("sites") {
        cfg.sites = v;
    }
    if let Some(&v) = m.get_one::<usize>("cutoff") {
        cfg.cutoff = v;
    }
    if let Some(v) = m.get_many::<usize>("sector") {
        cfg.sectors = v.copied().collect();
    }
    if let Some(&v) = m.get_one::<u64>("seed") {
        cfg.seed = v;
    }
    if let Some(f) = m.get_one::<String>("format") {
        cfg.format = if f == "csv" { Format::Csv } else { Format::Json };
    }
    for (check, _) in DEFAULT_TOLERANCES {
        if let Some(&t) = m.get_one::<f64>(&tol_flag(check)) {
            cfg.tolerances.insert(check.to_string(), t);
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Command::new("lattice-nls")
        .about("Residual checks for the quantum and classical lattice NLS model")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(Suite::ALL.map(suite_command));
    let matches = cli.get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let suite = Suite::ALL.into_iter().find(|s| s.name() == name).expect("registered subcommand");

    let result = build_config(suite, sub).and_then(|cfg| {
        let report = run_suite(&cfg)?;
        emit_report(&report, cfg.format, sub.get_one::<PathBuf>("out").map(|p| p.as_path()))?;
        Ok(report)
    });
    match result {
        Ok(report) => {
            for w in &report.summary.warnings {
                eprintln!("warning: {w}");
            }
            let s = &report.summary;
            eprintln!(
                "{}: {} checks, {} passed, {} failed, {} errors",
                suite.name(),
                s.total,
                s.passed,
                s.failed,
                s.errors
            );
            ExitCode::from(exit_code(&report) as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
