//! `atompack` command-line tool: filter, pack, inspect, diagnose, analyze.

mod analyze;
mod diagnose;
mod error;
mod filter;
mod inspect;
mod pack;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{CliError, Result};

#[derive(Parser, Debug)]
#[command(name = "atompack", version, about = "Deterministic concat/padding packing of tokenized corpora")]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true, env = "ATOMPACK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Drop rows with fewer than --min-words whitespace-separated words.
    Filter(filter::FilterArgs),
    /// Pack a corpus into fixed-length sequences and write dataset + manifest.
    ///
    /// Experiment grid (msl: atom sizes): 32: 8 16 32 64 128; 64: 16 32 64 128 256;
    /// 128: 32 64 128 256. Batch size defaults to 256 (msl 32, 64) or 128 (msl 128).
    Pack(pack::PackArgs),
    /// Verify a dataset file and print its manifest and statistics.
    Inspect(inspect::InspectArgs),
    /// Coherence diagnostics and an optional n-gram probe perplexity.
    Diagnose(diagnose::DiagnoseArgs),
    /// Rank training runs over the last epoch and compare final perplexities.
    Analyze(analyze::AnalyzeArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

pub fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::io(format!("{}: {e}", path.display()))
}

/// Writes `bytes` to `path`, refusing to replace an existing file unless `overwrite`.
pub fn write_file(path: &Path, bytes: &[u8], overwrite: bool) -> Result<()> {
    if !overwrite && path.exists() {
        return Err(CliError::io(format!(
            "{} already exists (pass --overwrite to replace it)",
            path.display()
        )));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

/// Prints a report to stdout.
pub fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| if text.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") })
        .map_err(|e| CliError::io(format!("stdout: {e}")))
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Filter(a) => filter::run(a),
        Command::Pack(a) => pack::run(a),
        Command::Inspect(a) => inspect::run(a),
        Command::Diagnose(a) => diagnose::run(a),
        Command::Analyze(a) => analyze::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(error::Code::Usage as u8);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(error::Code::Io as u8);
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `RUN=PATH`.
pub fn run_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((run, path)) if !run.is_empty() && !path.is_empty() => Ok((run.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected RUN=PATH, got {s:?}")),
    }
}
