//! `dunkl-hardy`: certify kernel estimates, run atomic decompositions and
//! merge certificate files into plot-ready tables.
//!
//! Exit codes: 0 pass, 1 a certificate or decomposition failed, 2 estimate
//! outside the supported scope, 64 usage error, 65 malformed or missing data.

mod config;
mod decompose;
mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{CampaignConfig, CommonArgs};
use dunkl_hardy::error::Error;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: String) -> Self {
        Self { code: 64, message }
    }

    pub fn data(message: String) -> Self {
        Self { code: 65, message }
    }

    pub fn unsupported(message: String) -> Self {
        Self { code: 2, message }
    }

    /// Maps library errors: scope to 2, configuration to 64, the rest to 65.
    pub fn library(context: &str, e: Error) -> Self {
        let message = format!("{context}: {e}");
        match e {
            Error::UnsupportedSystem(_) => Self::unsupported(message),
            Error::Config(_) | Error::Construction(_) | Error::InvalidRoot(_) => {
                Self::usage(message)
            }
            _ => Self::data(message),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::data(format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dunkl-hardy",
    version,
    about = "Dunkl heat and Poisson kernel certificates and Hardy-space atomic decompositions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Chain,
    Cz,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Certify the listed estimates; writes certificates.jsonl and ratios.csv
    Verify {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Decompose a grid function read from CSV into atoms
    Decompose {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        input: PathBuf,
        /// base ball center (chain mode), comma separated
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        y0: Option<Vec<f64>>,
        /// base ball radius (chain mode)
        #[arg(long)]
        r: Option<f64>,
        /// L^2 budget constant (chain mode)
        #[arg(long = "l2-budget")]
        l2_budget: Option<f64>,
        /// splitting rounds (cz mode)
        #[arg(long)]
        rounds: Option<usize>,
    },
    /// Merge certificate files into constants.csv and ratios.csv
    Report {
        #[command(flatten)]
        common: CommonArgs,
        files: Vec<PathBuf>,
    },
}

fn init_workers(n: usize) {
    // a second initialization in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Verify { common } => {
            let cfg = CampaignConfig::resolve(&common)?;
            init_workers(cfg.workers);
            verify::run(&cfg)
        }
        Command::Decompose {
            common,
            mode,
            input,
            y0,
            r,
            l2_budget,
            rounds,
        } => {
            let mut cfg = CampaignConfig::resolve(&common)?;
            let d = &mut cfg.decompose;
            d.y0 = y0.or(d.y0.take());
            d.r = r.or(d.r);
            d.l2_budget = l2_budget.or(d.l2_budget);
            d.rounds = rounds.or(d.rounds);
            init_workers(cfg.workers);
            decompose::run(&cfg, mode, &input)
        }
        Command::Report { common, files } => {
            let cfg = CampaignConfig::resolve(&common)?;
            report::run(&cfg, &files)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
