//! `kppfront`: config-driven experiments for nonlocal KPP free-boundary
//! problems. Every run reads one TOML file and writes CSV tables under
//! `<output_dir>/<subcommand>/<timestamp>/`.

mod checkpoint;
mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

/// Worker-pool size for parallel probes; defaults to the core count.
const WORKERS_ENV: &str = "KPPFRONT_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "kppfront", version, about = "Nonlocal KPP free-boundary experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Also write `plot.py` next to the CSV tables.
    #[arg(long)]
    emit_plotscript: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate the configuration.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Print the resolved configuration instead of the summary.
        #[arg(long)]
        echo: bool,
    },
    /// Integrate the free-boundary problem.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Stop at this time (a checkpoint is always written).
        #[arg(long, value_name = "TIME")]
        stop_at_time: Option<f64>,
        /// Continue from a checkpoint written with the same configuration.
        #[arg(long, value_name = "CHECKPOINT")]
        resume: Option<PathBuf>,
    },
    /// Principal eigenvalue sweep over interval lengths.
    Eigen(Common),
    /// Critical length.
    EllStar(Common),
    /// Critical expansion coefficient by bisection.
    MuStar(Common),
    /// Semi-wave profiles on a speed grid.
    Semiwave(Common),
    /// Asymptotic speed against a measured front slope.
    Speed(Common),
    /// Growth-law fit for accelerating fronts.
    Accelerate(Common),
    /// Randomized comparison-principle checks.
    Harness(Common),
}

fn init_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<String, CliError> {
    init_workers()?;
    use commands as c;
    match cli.command {
        Command::Validate { common, echo } => c::validate(&common.config, echo),
        Command::Simulate {
            common,
            stop_at_time,
            resume,
        } => c::simulate(&common.config, common.emit_plotscript, stop_at_time, resume.as_deref()),
        Command::Eigen(a) => c::eigen(&a.config, a.emit_plotscript),
        Command::EllStar(a) => c::ell_star(&a.config, a.emit_plotscript),
        Command::MuStar(a) => c::mu_star(&a.config, a.emit_plotscript),
        Command::Semiwave(a) => c::semiwave(&a.config, a.emit_plotscript),
        Command::Speed(a) => c::speed(&a.config, a.emit_plotscript),
        Command::Accelerate(a) => c::accelerate(&a.config, a.emit_plotscript),
        Command::Harness(a) => c::harness(&a.config, a.emit_plotscript),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
