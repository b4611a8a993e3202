use std::path::PathBuf;

use atompack::diagnostics::{coherence_report, probe_perplexity, DiagnosticsError, ProbeModel};
use atompack::packer::format::read_dataset;
use clap::Args;

use crate::error::{CliError, Result};
use crate::{emit, to_json, Format, OutputArgs};

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Dataset to measure (must carry provenance).
    #[arg(env = "ATOMPACK_DATASET")]
    dataset: PathBuf,
    /// Evaluation dataset; when given, fit an n-gram probe on DATASET and
    /// report its perplexity here.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Probe n-gram order.
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Probe add-k smoothing constant.
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    /// Probe vocabulary size (default: distinct ids in both datasets).
    #[arg(long)]
    vocab_size: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn run(args: DiagnoseArgs) -> Result<()> {
    let ds = read_dataset(&args.dataset)?;
    let report = coherence_report(&ds).map_err(|e| match e {
        DiagnosticsError::MissingProvenance(_) => CliError::from(e).context(format!(
            "{}: packed with --no-provenance; re-pack without it to diagnose",
            args.dataset.display()
        )),
        e => e.into(),
    })?;
    let probe = match &args.eval {
        None => None,
        Some(path) => {
            let eval = read_dataset(path)?;
            let mut model = ProbeModel::new(args.order, args.smoothing);
            if let Some(v) = args.vocab_size {
                model = model.with_vocab_size(v);
            }
            Some(probe_perplexity(&ds, &eval, model).map_err(|e| {
                CliError::from(e).context(format!("probe on --eval {}", path.display()))
            })?)
        }
    };
    match args.out.format {
        Format::Json => emit(&to_json(&serde_json::json!({
            "dataset": args.dataset.display().to_string(),
            "coherence": report,
            "probe_perplexity": probe,
            "probe_order": args.order,
            "probe_smoothing": args.smoothing,
        }))),
        Format::Text => {
            let mut s = format!(
                "{} (operational metrics defined by this tool)\n{report}\n",
                args.dataset.display()
            );
            if let (Some(p), Some(path)) = (probe, &args.eval) {
                s.push_str(&format!(
                    "probe perplexity  {p:.6}  (order {}, add-{} smoothing, eval {})\n",
                    args.order,
                    args.smoothing,
                    path.display()
                ));
            }
            emit(&s)
        }
    }
}
