use std::path::PathBuf;

use atompack::corpus::{filter_rows, read_raw_rows, FilterStats, DEFAULT_MIN_WORDS};
use clap::Args;

use crate::error::Result;
use crate::{emit, to_json, write_file, Format, OutputArgs};

#[derive(Args, Debug)]
pub struct FilterArgs {
    /// Raw corpus: one paragraph per line, or JSON lines with a "text" field.
    #[arg(long, short, env = "ATOMPACK_CORPUS")]
    input: PathBuf,
    /// Filtered corpus, written as JSON lines with a "text" field.
    #[arg(long, short, env = "ATOMPACK_FILTERED")]
    output: PathBuf,
    /// Minimum whitespace-separated words a row needs to be kept.
    #[arg(long, default_value_t = DEFAULT_MIN_WORDS)]
    min_words: usize,
    /// Also write the filter statistics as JSON.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn render(stats: &FilterStats) -> String {
    format!(
        "rows   {} in, {} kept, {} dropped ({:.2}%)\nwords  {} in, {} kept ({:.2}% dropped)\n",
        stats.rows_in,
        stats.rows_kept,
        stats.rows_dropped,
        100.0 * stats.row_drop_fraction,
        stats.words_in,
        stats.words_kept,
        100.0 * stats.word_drop_fraction
    )
}

pub fn run(args: FilterArgs) -> Result<()> {
    let rows = read_raw_rows(&args.input)?;
    let (kept, stats) = filter_rows(rows, args.min_words);
    let mut body = String::new();
    for row in &kept {
        body.push_str(&serde_json::json!({ "text": row.text }).to_string());
        body.push('\n');
    }
    write_file(&args.output, body.as_bytes(), args.overwrite)?;
    if let Some(path) = &args.stats {
        write_file(path, to_json(&stats).as_bytes(), args.overwrite)?;
    }
    match args.out.format {
        Format::Text => emit(&render(&stats)),
        Format::Json => emit(&to_json(&stats)),
    }
}
