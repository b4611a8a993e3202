//! Training-log analysis: EMA smoothing, epoch annotation, last-epoch
//! segment ranking and run comparison tables.

mod ema;
mod epochs;
mod ranking;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ema::{ema_smooth, EmaParams, DEFAULT_ALPHA, EMA_CAP};
pub use epochs::{annotate_epochs, EpochMode, EpochSchedule};
pub use ranking::{
    compare_runs, segment_rank, ComparisonReport, ComparisonRow, RankingReport, RunSummary,
    SegmentRow, DEFAULT_SEGMENTS,
};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyzerError {
    #[error("series is empty")]
    EmptySeries,
    #[error("alpha must be in (0, 1] and cap in (0, 1] (got alpha={alpha}, cap={cap})")]
    InvalidEma { alpha: f64, cap: f64 },
    #[error("run {run_id}: {message}")]
    InvalidLog { run_id: String, message: String },
    #[error("run {0} has entries without epoch_fraction; annotate it first")]
    NotAnnotated(String),
    #[error("no dataset schedule for run {0}")]
    MissingManifest(String),
    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),
    #[error("ranking needs at least 2 runs (got {0})")]
    TooFewRuns(usize),
    #[error("segment count must be positive")]
    ZeroSegments,
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    /// Cumulative epochs completed, e.g. 1.5 halfway through the second epoch.
    pub epoch_fraction: Option<f64>,
    pub perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub run_id: String,
    pub entries: Vec<LogEntry>,
}

impl RunLog {
    /// Validates ordering and value ranges.
    pub fn new(run_id: impl Into<String>, entries: Vec<LogEntry>) -> Result<Self, AnalyzerError> {
        let log = Self {
            run_id: run_id.into(),
            entries,
        };
        log.validate()?;
        Ok(log)
    }

    pub fn validate(&self) -> Result<(), AnalyzerError> {
        let bad = |message: String| AnalyzerError::InvalidLog {
            run_id: self.run_id.clone(),
            message,
        };
        for e in &self.entries {
            if !(e.perplexity > 0.0 && e.perplexity.is_finite()) {
                return Err(bad(format!("step {}: perplexity {} is not positive", e.step, e.perplexity)));
            }
            if let Some(x) = e.epoch_fraction {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(bad(format!("step {}: epoch_fraction {x} is negative", e.step)));
                }
            }
        }
        for w in self.entries.windows(2) {
            if w[1].step <= w[0].step {
                return Err(bad(format!("steps not strictly increasing at {}", w[1].step)));
            }
            if let (Some(a), Some(b)) = (w[0].epoch_fraction, w[1].epoch_fraction) {
                if b < a {
                    return Err(bad(format!("epoch_fraction decreases at step {}", w[1].step)));
                }
            }
        }
        Ok(())
    }

    pub fn perplexities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.perplexity).collect()
    }

    pub fn is_annotated(&self) -> bool {
        self.entries.iter().all(|e| e.epoch_fraction.is_some())
    }
}

#[derive(Deserialize)]
struct LogRecord {
    run_id: String,
    step: u64,
    perplexity: f64,
    #[serde(default)]
    epoch_fraction: Option<f64>,
}

fn group(records: Vec<(usize, LogRecord)>) -> Result<Vec<RunLog>, AnalyzerError> {
    let mut runs: Vec<RunLog> = Vec::new();
    for (_, r) in records {
        let entry = LogEntry {
            step: r.step,
            epoch_fraction: r.epoch_fraction,
            perplexity: r.perplexity,
        };
        match runs.iter_mut().find(|l| l.run_id == r.run_id) {
            Some(log) => log.entries.push(entry),
            None => runs.push(RunLog {
                run_id: r.run_id,
                entries: vec![entry],
            }),
        }
    }
    for log in &runs {
        log.validate()?;
    }
    Ok(runs)
}

/// Parses run logs from JSON lines (`{"run_id", "step", "perplexity",
/// "epoch_fraction"?}`) or comma-separated columns
/// `run_id,step,perplexity[,epoch_fraction]` with an optional header row.
/// Runs are returned in order of first appearance.
pub fn parse_logs(text: &str, origin: &str) -> Result<Vec<RunLog>, AnalyzerError> {
    let first = text.lines().find(|l| !l.trim().is_empty());
    match first {
        None => Ok(Vec::new()),
        Some(l) if l.trim_start().starts_with('{') => parse_jsonl(text, origin),
        Some(_) => parse_csv(text, origin),
    }
}

fn parse_jsonl(text: &str, origin: &str) -> Result<Vec<RunLog>, AnalyzerError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(line).map_err(|e| AnalyzerError::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push((i + 1, rec));
    }
    group(records)
}

fn parse_csv(text: &str, origin: &str) -> Result<Vec<RunLog>, AnalyzerError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut columns = ["run_id", "step", "perplexity", "epoch_fraction"].map(String::from).to_vec();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 1;
        let perr = |message: String| AnalyzerError::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let row = row.map_err(|e| perr(e.to_string()))?;
        if row.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && row.iter().any(|f| f == "run_id" || f == "step" || f == "perplexity") {
            columns = row.iter().map(String::from).collect();
            continue;
        }
        let field = |name: &str| -> Option<&str> {
            columns
                .iter()
                .position(|c| c == name)
                .and_then(|k| row.get(k))
                .filter(|v| !v.is_empty())
        };
        let need = |name: &str| field(name).ok_or_else(|| perr(format!("missing column {name}")));
        let rec = LogRecord {
            run_id: need("run_id")?.to_string(),
            step: need("step")?
                .parse()
                .map_err(|e| perr(format!("step: {e}")))?,
            perplexity: need("perplexity")?
                .parse()
                .map_err(|e| perr(format!("perplexity: {e}")))?,
            epoch_fraction: field("epoch_fraction")
                .map(|v| v.parse().map_err(|e| perr(format!("epoch_fraction: {e}"))))
                .transpose()?,
        };
        records.push((line, rec));
    }
    group(records)
}

pub fn read_logs(path: &Path) -> Result<Vec<RunLog>, AnalyzerError> {
    let text = fs::read_to_string(path).map_err(|e| AnalyzerError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_logs(&text, &path.display().to_string())
}
