//! `sqrobust` experiment driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime or feasibility
//! failure.

mod commands;
mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{report_path, CliError};
use config::{load, CommandConfig};
use report::{Format, Report};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "SQROBUST_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "sqrobust", version, about = "Hard robust classification instances and their numerical checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Gauss–Hermite nodes, weights and moment checks over a range of orders.
    Quadrature(Common),
    /// Serialize an instance and write labeled samples (`--out` names a directory).
    Instance(Common),
    /// Robust loss over an epsilon grid for set-vote, linear and nearest-neighbor classifiers.
    Robustness(Common),
    /// Distinguishing-game accuracy against the SQ oracle.
    Sq(Common),
    /// Chi-correlation values.
    Chi(Common),
    /// Greedy and exact two-distance covers.
    Cover(Common),
    /// Robust ERM over the family's set-vote classifiers.
    Erm(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Quadrature(c)
            | Command::Instance(c)
            | Command::Robustness(c)
            | Command::Sq(c)
            | Command::Chi(c)
            | Command::Cover(c)
            | Command::Erm(c) => c,
        }
    }
}

fn read_config<C: CommandConfig>(common: &Common) -> Result<C, CliError> {
    let text = match &common.config {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?,
        ),
        None => None,
    };
    load(text.as_deref(), common.seed).map_err(CliError::Config)
}

fn env_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn emit(report: &Report, common: &Common) -> Result<(), CliError> {
    let text = report.render(common.format);
    match report_path(common.out.as_deref(), env_dir(), report.command, common.format.extension()) {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(command: &Command) -> Result<(), CliError> {
    let common = command.common();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let report = match command {
        Command::Quadrature(c) => commands::quadrature(&read_config(c)?)?,
        Command::Instance(c) => {
            let cfg = read_config(c)?;
            let dir = c.out.clone().or_else(env_dir).unwrap_or_else(|| PathBuf::from("."));
            let report = commands::instance(&cfg, &dir)?;
            let path = dir.join(format!("report.{}", c.format.extension()));
            std::fs::write(&path, report.render(c.format))?;
            eprintln!("wrote {}", Path::new(&dir).display());
            return Ok(());
        }
        Command::Robustness(c) => commands::robustness(&read_config(c)?)?,
        Command::Sq(c) => commands::sq(&read_config(c)?)?,
        Command::Chi(c) => commands::chi(&read_config(c)?)?,
        Command::Cover(c) => commands::cover(&read_config(c)?)?,
        Command::Erm(c) => commands::erm(&read_config(c)?)?,
    };
    emit(&report, common)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sqrobust: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
