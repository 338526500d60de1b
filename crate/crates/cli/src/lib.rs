//! `ddiqkd` command line: single runs, parameter sweeps and offline
//! analysis of transcript files.
//!
//! Exit codes: 0 on success, 1 for usage, parse and I/O errors, 2 when the
//! scenario itself cannot run (infeasible covert rate, no viable blinding
//! plan).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ddiqkd_core::config::ConfigError;
use ddiqkd_core::export::{report_json, transcript_csv_string, ExportError};
use ddiqkd_core::protocol::{run_session, SessionError};
use ddiqkd_core::{parse_config, SessionConfig};
use thiserror::Error;

pub mod analyze;
pub mod sweep;

#[derive(Debug, Parser)]
#[command(name = "ddiqkd", version, about = "DDI-QKD attack simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one session and write transcript.csv and report.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every point of a parameter grid over several seeds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// JSON object mapping parameter names to lists of values.
        #[arg(long)]
        grid: PathBuf,
        /// Sessions per grid point.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Master seed; defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the detectability monitors on a transcript's public columns.
    Analyze {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Expected reports per slot; defaults to the transcript metadata.
        #[arg(long)]
        expected_rate: Option<f64>,
        /// Significance level; defaults to the transcript metadata, then 0.01.
        #[arg(long)]
        alpha: Option<f64>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("{path}: {source}")]
    Transcript { path: PathBuf, source: ExportError },
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Session(e) if e.is_infeasible() => 2,
            _ => 1,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_config(path: &Path) -> Result<SessionConfig, CliError> {
    parse_config(&read_file(path)?).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

pub fn run(config: &Path, seed: Option<u64>, out: &Path) -> Result<String, CliError> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (transcript, report) = run_session(&cfg)?;
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    write_file(
        &out.join("transcript.csv"),
        transcript_csv_string(&cfg, &transcript).as_bytes(),
    )?;
    write_file(&out.join("report.json"), report_json(&report).as_bytes())?;
    let qber = report.qber.map_or("n/a".to_string(), |q| format!("{q:.4}"));
    Ok(format!(
        "{} seed {}: {} reported of {} slots, qber {qber}; wrote {}",
        report.mode,
        report.seed,
        report.reported,
        report.sent,
        out.display()
    ))
}

pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Run { config, seed, out } => run(&config, seed, &out),
        Command::Sweep {
            config,
            grid,
            seeds,
            seed,
            out,
        } => sweep::sweep(&config, &grid, seeds, seed, &out),
        Command::Analyze {
            transcript,
            out,
            expected_rate,
            alpha,
        } => analyze::analyze(&transcript, &out, expected_rate, alpha),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
