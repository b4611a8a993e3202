use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use atompack::accounting::PackStats;
use atompack::analyzer::{
    annotate_epochs, compare_runs, ema_smooth, read_logs, EmaParams, EpochMode, EpochSchedule,
    RunLog, DEFAULT_ALPHA, DEFAULT_SEGMENTS,
};
use atompack::packer::format::{read_dataset, read_manifest};
use clap::Args;

use crate::error::{CliError, Result};
use crate::{emit, io_error, run_path, to_json, write_file, Format, OutputArgs};

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Run logs: JSON lines {"run_id","step","perplexity","epoch_fraction"?}
    /// or CSV run_id,step,perplexity[,epoch_fraction]. Repeatable.
    #[arg(long, required = true, num_args = 1.., env = "ATOMPACK_LOGS", value_delimiter = ',')]
    logs: Vec<PathBuf>,
    /// Dataset a run trained on, used for epoch fractions and steps per epoch.
    #[arg(long = "dataset", value_name = "RUN=PATH", value_parser = run_path)]
    datasets: Vec<(String, PathBuf)>,
    /// Manifest of a run's dataset (sequence-mode epochs only).
    #[arg(long = "manifest", value_name = "RUN=PATH", value_parser = run_path)]
    manifests: Vec<(String, PathBuf)>,
    /// Equal segments of the final epoch used for ranking.
    #[arg(long, default_value_t = DEFAULT_SEGMENTS)]
    segments: usize,
    /// EMA smoothing parameter for plot data; the per-step weight is sqrt(alpha), capped at 0.999.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// How steps map to epoch fractions for logs without them.
    #[arg(long, default_value_t = EpochMode::WordToken, value_parser = parse_mode)]
    epoch_mode: EpochMode,
    /// Write per-run curves (<run>.tsv) and per-segment means (segments.tsv) here.
    #[arg(long, env = "ATOMPACK_PLOT_DIR")]
    plot_dir: Option<PathBuf>,
    /// Write the report to this file instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
    #[command(flatten)]
    out: OutputArgs,
}

fn parse_mode(s: &str) -> std::result::Result<EpochMode, String> {
    s.parse()
}

struct Source {
    schedule: EpochSchedule,
    stats: PackStats,
    flag: &'static str,
}

fn sources(args: &AnalyzeArgs, runs: &[RunLog]) -> Result<HashMap<String, Source>> {
    let mut out: HashMap<String, Source> = HashMap::new();
    let known = |run: &str, flag: &str| -> Result<()> {
        if runs.iter().any(|r| r.run_id == run) {
            Ok(())
        } else {
            Err(CliError::validation(format!("{flag} {run}=...: no run {run:?} in --logs")))
        }
    };
    for (run, path) in &args.datasets {
        known(run, "--dataset")?;
        let ds = read_dataset(path)?;
        let src = Source {
            schedule: EpochSchedule::from_dataset(&ds),
            stats: ds.stats,
            flag: "--dataset",
        };
        if out.insert(run.clone(), src).is_some() {
            return Err(CliError::validation(format!("--dataset: run {run:?} given twice")));
        }
    }
    for (run, path) in &args.manifests {
        known(run, "--manifest")?;
        let m = read_manifest(path)?;
        let src = Source {
            schedule: EpochSchedule::from_counts(m.sequence_count, m.config.batch_size as u64),
            stats: m.pack_stats,
            flag: "--manifest",
        };
        if out.insert(run.clone(), src).is_some() {
            return Err(CliError::validation(format!(
                "--manifest: run {run:?} already has a --dataset or --manifest"
            )));
        }
    }
    Ok(out)
}

fn file_stem(run: &str) -> String {
    run.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map_or("nan".into(), |v| format!("{v}"))
}

pub fn run(args: AnalyzeArgs) -> Result<()> {
    let params = EmaParams::new(args.alpha);
    params
        .validate()
        .map_err(|e| CliError::from(e).context("--alpha"))?;
    if args.segments == 0 {
        return Err(CliError::validation("--segments must be at least 1"));
    }

    let mut runs: Vec<RunLog> = Vec::new();
    for path in &args.logs {
        for log in read_logs(path)? {
            if runs.iter().any(|r| r.run_id == log.run_id) {
                return Err(CliError::validation(format!(
                    "{}: run {:?} appears in more than one --logs file",
                    path.display(),
                    log.run_id
                )));
            }
            runs.push(log);
        }
    }
    if runs.is_empty() {
        return Err(CliError::data("--logs: no log entries found"));
    }
    let sources = sources(&args, &runs)?;

    let mut annotated = Vec::with_capacity(runs.len());
    for log in runs {
        if log.is_annotated() {
            annotated.push(log);
            continue;
        }
        let src = sources.get(&log.run_id).ok_or_else(|| {
            CliError::validation(format!(
                "run {:?} has no epoch_fraction column; pass --dataset {0}=PATH or --manifest {0}=PATH",
                log.run_id
            ))
        })?;
        if !src.schedule.supports(args.epoch_mode) {
            return Err(CliError::validation(format!(
                "run {:?}: {} gives sequence counts only; use --epoch-mode sequence or --dataset",
                log.run_id, src.flag
            )));
        }
        annotated.push(annotate_epochs(&log, Some(&src.schedule), args.epoch_mode)?);
    }
    let stats: HashMap<String, PackStats> =
        sources.iter().map(|(k, v)| (k.clone(), v.stats)).collect();
    let report = compare_runs(&annotated, &stats, args.segments)?;

    if let Some(dir) = &args.plot_dir {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        for log in &annotated {
            let smooth = ema_smooth(&log.perplexities(), params)?;
            let mut s = String::from("step\tepoch_fraction\tperplexity\tema\n");
            for (e, m) in log.entries.iter().zip(&smooth) {
                writeln!(s, "{}\t{}\t{}\t{}", e.step, opt(e.epoch_fraction), e.perplexity, m).unwrap();
            }
            write_file(&dir.join(format!("{}.tsv", file_stem(&log.run_id))), s.as_bytes(), args.overwrite)?;
        }
        let mut s = String::from("segment\tlo\thi");
        for log in &annotated {
            write!(s, "\t{}", log.run_id).unwrap();
        }
        s.push('\n');
        for seg in &report.ranking.segments {
            write!(s, "{}\t{}\t{}", seg.index, seg.lo, seg.hi).unwrap();
            for m in &seg.means {
                write!(s, "\t{}", opt(*m)).unwrap();
            }
            s.push('\n');
        }
        write_file(&dir.join("segments.tsv"), s.as_bytes(), args.overwrite)?;
    }

    let text = match args.out.format {
        Format::Json => to_json(&serde_json::json!({
            "segments": args.segments,
            "epoch_mode": args.epoch_mode,
            "alpha": args.alpha,
            "report": report,
        })),
        Format::Text => format!(
            "final-epoch segments {}, epoch mode {}\n{report}",
            args.segments, args.epoch_mode
        ),
    };
    match &args.report {
        Some(path) => write_file(path, text.as_bytes(), args.overwrite),
        None => emit(&text),
    }
}
