use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stoconv_cli::config::{
    ExperimentConfig, DEFAULT_BOUNDS_AUDIT, DEFAULT_CONVERGENCE, DEFAULT_SELFTEST,
};
use stoconv_cli::{run_bounds_audit, run_convergence_study, run_selftest, CliError, Report};

#[derive(Debug, Parser)]
#[command(
    name = "stoconv",
    version,
    about = "Tamed exponential Euler convergence studies and bound audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML); the built-in default for the subcommand otherwise.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// CSV output path; a JSON summary is written next to it. Stdout if absent.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Temporal and spatial strong error sweeps with rate fits.
    Convergence,
    /// Empirical moments, Hölder quotients and exponential moments against their bounds.
    BoundsAudit,
    /// Oracle suite.
    Selftest,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::from_toml(match cli.command {
            Command::Convergence => DEFAULT_CONVERGENCE,
            Command::BoundsAudit => DEFAULT_BOUNDS_AUDIT,
            Command::Selftest => DEFAULT_SELFTEST,
        })?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn write_outputs(report: &Report, out: Option<&Path>) -> Result<(), CliError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(io_err(path))?;
            report.write_csv(io::BufWriter::new(file))?;
            let json = path.with_extension("json");
            fs::write(&json, report.summary_json() + "\n").map_err(io_err(&json))?;
        }
        None => {
            report.write_csv(io::stdout().lock())?;
            eprintln!("{}", report.summary_json());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    let cfg = load(cli)?;
    let report = match cli.command {
        Command::Convergence => run_convergence_study(&cfg)?,
        Command::BoundsAudit => run_bounds_audit(&cfg)?,
        Command::Selftest => run_selftest(&cfg)?,
    };
    write_outputs(&report, cfg.output.as_deref())?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(report) => {
            let mut err = io::stderr().lock();
            for w in &report.warnings {
                let _ = writeln!(err, "warning: {w}");
            }
            for r in report.failures() {
                let _ = writeln!(err, "FAIL {} {}", r.quantity, r.parameters);
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
