//! `szego`: tabulate, fit, predict and verify equivariant Szego kernel
//! expansion coefficients on model spheres.
//!
//! Exit codes: 0 on success, 1 when a check fails or a computation breaks
//! down, 2 for configuration and input errors.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::CliError;
use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "szego", version, about = "Equivariant Szego kernel expansion coefficients on model spheres")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Working precision in bits (overrides the config and SZEGO_PRECISION).
    #[arg(long)]
    precision: Option<u32>,
    /// Weight of the isotypic component, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    k: Option<Vec<i64>>,
    #[arg(long)]
    m_min: Option<u64>,
    #[arg(long)]
    m_max: Option<u64>,
    /// Number of fitted expansion terms.
    #[arg(long)]
    terms: Option<usize>,
    /// Record wall-clock timings in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate S_{k,m}(p, p) at the moment-map zero point as CSV.
    Kernel(Common),
    /// Fit expansion coefficients to a kernel CSV and compare with the predictions.
    Fit {
        #[command(flatten)]
        common: Common,
        /// CSV written by `szego kernel`.
        #[arg(long, short)]
        input: PathBuf,
    },
    /// Predicted coefficients and the geometric invariants behind them.
    Coeffs(Common),
    /// Stationary-phase expansion of a polynomial phase or of the orbit integral.
    Expand(Common),
    /// Run the acceptance checks; exit 1 if any fails.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Only these criteria, comma separated.
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<u8>>,
    },
}

fn load(c: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&c.config)?;
    cfg.apply_env()?;
    if let Some(p) = c.precision {
        cfg.precision_bits = p;
    }
    if let Some(k) = &c.k {
        cfg.k = k.clone();
    }
    if let Some(m) = c.m_min {
        cfg.m_range.min = m;
    }
    if let Some(m) = c.m_max {
        cfg.m_range.max = m;
    }
    if let Some(t) = c.terms {
        cfg.fit_terms = t;
    }
    cfg.emit_timings |= c.timings;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Kernel(c) => {
            let cfg = load(&c)?;
            let out = c.output.clone().or_else(|| cfg.output.kernel_csv.clone());
            commands::emit(out.as_deref(), &commands::cmd_kernel(&cfg)?)?;
            Ok(true)
        }
        Command::Fit { common, input } => {
            let cfg = load(&common)?;
            let text = std::fs::read_to_string(&input).map_err(|e| CliError::Input(format!("cannot read {}: {e}", input.display())))?;
            let out = common.output.clone().or_else(|| cfg.output.report.clone());
            commands::emit(out.as_deref(), &commands::cmd_fit(&cfg, &text)?)?;
            Ok(true)
        }
        Command::Coeffs(c) => {
            let cfg = load(&c)?;
            let out = c.output.clone().or_else(|| cfg.output.report.clone());
            commands::emit(out.as_deref(), &commands::cmd_coeffs(&cfg)?)?;
            Ok(true)
        }
        Command::Expand(c) => {
            let cfg = load(&c)?;
            let out = c.output.clone().or_else(|| cfg.output.report.clone());
            commands::emit(out.as_deref(), &commands::cmd_expand(&cfg)?)?;
            Ok(true)
        }
        Command::Verify { common, criteria } => {
            let mut cfg = load(&common)?;
            if criteria.is_some() {
                cfg.criteria = criteria;
                cfg.validate()?;
            }
            let out = common.output.clone().or_else(|| cfg.output.report.clone());
            let (text, passed) = commands::cmd_verify(&cfg)?;
            commands::emit(out.as_deref(), &text)?;
            Ok(passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
