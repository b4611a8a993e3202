use std::fs;
use std::path::{Path, PathBuf};

use atompack::accounting::PackStats;
use atompack::corpus::{
    filter_rows, load_pretokenized, read_raw_rows, tokenize_rows, ByteTokenizer, Document,
    FilterStats, PassThroughTokenizer, ReservedIds, TokenizerPort, DEFAULT_MIN_WORDS,
};
use atompack::packer::format::{manifest_path, write_dataset, WriteOptions};
use atompack::packer::{
    pack, table1_atom_sizes, table1_batch_size, PackConfig, Strategy, DEFAULT_SEED, GPT2_EOS_ID,
};
use atompack::TokenId;
use clap::{Args, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::{emit, io_error, to_json, Format, OutputArgs};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// JSON lines of token-id arrays (or {"tokens": [...]}); no word filter.
    Pretokenized,
    /// Raw text, filtered by --min-words, one token per UTF-8 byte (EOS 256).
    Byte,
    /// Raw text whose rows already hold token ids, filtered by --min-words.
    PassThrough,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategyArg {
    Concat,
    Padding,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Concat => Strategy::Concat,
            StrategyArg::Padding => Strategy::Padding,
        }
    }
}

#[derive(Args, Debug)]
pub struct PackArgs {
    /// Input corpus.
    #[arg(long, short, env = "ATOMPACK_CORPUS")]
    input: PathBuf,
    /// Dataset file to write (a directory with --table1-sweep). The manifest
    /// goes next to it as <file>.manifest.json.
    #[arg(long, short, env = "ATOMPACK_DATASET")]
    output: PathBuf,
    /// How to read and tokenize the input.
    #[arg(long, value_enum, default_value_t = InputKind::Pretokenized)]
    tokenizer: InputKind,
    #[arg(long, value_enum, default_value_t = StrategyArg::Concat)]
    strategy: StrategyArg,
    /// Maximum sequence length of every output row.
    #[arg(long)]
    msl: usize,
    /// Atom (shuffling chunk) size; must divide msl or be a multiple of it.
    #[arg(long = "atom", required_unless_present = "table1_sweep", conflicts_with = "table1_sweep")]
    atom_size: Option<usize>,
    /// Pack every atom size of the experiment grid for --msl into --output/.
    #[arg(long)]
    table1_sweep: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Rows per optimizer step, used for steps per epoch (default: 256, or 128 for msl >= 128).
    #[arg(long)]
    batch_size: Option<usize>,
    /// EOS id (default: 256 for --tokenizer byte, otherwise 50256).
    #[arg(long)]
    eos_id: Option<TokenId>,
    /// Pad id (default: the EOS id).
    #[arg(long)]
    pad_id: Option<TokenId>,
    /// Minimum words per raw row; ignored for pre-tokenized input.
    #[arg(long, default_value_t = DEFAULT_MIN_WORDS)]
    min_words: usize,
    /// Keep the final partial concat atom (padded) instead of dropping it.
    #[arg(long)]
    keep_remainder: bool,
    /// Leave provenance out of the dataset file.
    #[arg(long)]
    no_provenance: bool,
    /// Replace existing output files.
    #[arg(long)]
    overwrite: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Serialize)]
struct Written {
    dataset: String,
    manifest: String,
    atom_size: usize,
    stats: PackStats,
}

fn configs(args: &PackArgs) -> Result<Vec<PackConfig>> {
    let atoms: Vec<usize> = if args.table1_sweep {
        table1_atom_sizes(args.msl)
            .ok_or_else(|| {
                CliError::validation(format!(
                    "--table1-sweep: msl {} is not in the experiment grid (32, 64, 128)",
                    args.msl
                ))
            })?
            .to_vec()
    } else {
        vec![args.atom_size.expect("clap requires --atom")]
    };
    let eos = args.eos_id.unwrap_or(match args.tokenizer {
        InputKind::Byte => ByteTokenizer::FIRST_RESERVED,
        _ => GPT2_EOS_ID,
    });
    atoms
        .into_iter()
        .map(|atom| {
            let mut cfg = PackConfig::new(args.strategy.into(), args.msl, atom)
                .with_eos(eos)
                .with_seed(args.seed)
                .with_batch_size(args.batch_size.unwrap_or_else(|| table1_batch_size(args.msl)));
            cfg.pad_id = args.pad_id.unwrap_or(eos);
            cfg.min_words = args.min_words;
            cfg.drop_concat_remainder = !args.keep_remainder;
            cfg.validate()
                .map_err(|e| CliError::from(e).context("invalid --msl/--atom/--batch-size"))?;
            Ok(cfg)
        })
        .collect()
}

fn load(args: &PackArgs, reserved: ReservedIds) -> Result<(Vec<Document>, Option<FilterStats>)> {
    let tokenizer: &dyn TokenizerPort = match args.tokenizer {
        InputKind::Pretokenized => return Ok((load_pretokenized(&args.input, reserved)?, None)),
        InputKind::Byte => &ByteTokenizer,
        InputKind::PassThrough => &PassThroughTokenizer,
    };
    let rows = read_raw_rows(&args.input)?;
    let (kept, stats) = filter_rows(rows, args.min_words);
    Ok((tokenize_rows(&kept, tokenizer, reserved)?, Some(stats)))
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn sweep_table(written: &[Written]) -> String {
    let mut s = format!(
        "{:>6} {:>10} {:>10} {:>12} {:>10} {:>12} {:>12} {:>9}\n",
        "atom", "sequences", "steps", "word", "eos", "pad_subseq", "pad_tail", "pad %"
    );
    for w in written {
        let t = &w.stats;
        s.push_str(&format!(
            "{:>6} {:>10} {:>10} {:>12} {:>10} {:>12} {:>12} {:>9.3}\n",
            w.atom_size,
            t.sequence_count,
            t.steps_per_epoch,
            t.word_tokens,
            t.eos_tokens,
            t.pad_subseq,
            t.pad_tail,
            100.0 * t.pad_fraction()
        ));
    }
    s
}

pub fn run(args: PackArgs) -> Result<()> {
    let configs = configs(&args)?;
    let reserved = ReservedIds::new(configs[0].eos_id, configs[0].pad_id);
    let (docs, filter_stats) = load(&args, reserved)?;
    if docs.is_empty() {
        return Err(CliError::data(format!(
            "{}: no documents to pack (after filtering with --min-words {})",
            args.input.display(),
            args.min_words
        )));
    }
    let opts = WriteOptions {
        overwrite: args.overwrite,
        filter_stats,
        input_sha256: Some(file_sha256(&args.input)?),
        skip_provenance: args.no_provenance,
    };
    if args.table1_sweep {
        fs::create_dir_all(&args.output).map_err(|e| io_error(&args.output, e))?;
    }
    let mut written = Vec::new();
    for cfg in &configs {
        let path = if args.table1_sweep {
            args.output
                .join(format!("{}-msl{}-atom{}.atpk", cfg.strategy, cfg.msl, cfg.atom_size))
        } else {
            args.output.clone()
        };
        let ds = pack(&docs, cfg)?;
        let manifest = write_dataset(&ds, &path, &opts)?;
        written.push(Written {
            dataset: path.display().to_string(),
            manifest: manifest_path(&path).display().to_string(),
            atom_size: cfg.atom_size,
            stats: manifest.pack_stats,
        });
    }
    match (args.out.format, args.table1_sweep) {
        (Format::Json, true) => emit(&to_json(&written)),
        (Format::Json, false) => emit(&to_json(&written[0])),
        (Format::Text, true) => emit(&format!(
            "{} msl {} batch {}\n{}",
            configs[0].strategy,
            args.msl,
            configs[0].batch_size,
            sweep_table(&written)
        )),
        (Format::Text, false) => {
            let w = &written[0];
            emit(&format!("wrote {} ({})\n{}", w.dataset, w.manifest, w.stats))
        }
    }
}
