use std::path::PathBuf;

use atompack::packer::format::{manifest_path, read_dataset, read_manifest};
use clap::Args;

use crate::error::Result;
use crate::{emit, to_json, Format, OutputArgs};

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// Dataset file (its manifest is read from <file>.manifest.json).
    #[arg(env = "ATOMPACK_DATASET")]
    dataset: PathBuf,
    /// Also print the first N rows (tokens, with unscored positions in brackets).
    #[arg(long, default_value_t = 0)]
    rows: usize,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn run(args: InspectArgs) -> Result<()> {
    let ds = read_dataset(&args.dataset)?;
    let manifest = read_manifest(&manifest_path(&args.dataset))?;
    let rows: Vec<&Vec<u32>> = ds.sequences.iter().take(args.rows).map(|s| &s.tokens).collect();
    match args.out.format {
        Format::Json => emit(&to_json(&serde_json::json!({
            "manifest": manifest,
            "stats": ds.stats,
            "rows": rows,
        }))),
        Format::Text => {
            let c = &manifest.config;
            let mut s = format!(
                "{} (format {} v{}, {} {})\nverified: file and payload checksums match\n",
                args.dataset.display(),
                manifest.format,
                manifest.format_version,
                manifest.tool,
                manifest.tool_version
            );
            s.push_str(&format!(
                "strategy {}  msl {}  atom {}  seed {}  eos {}  pad {}  drop remainder {}\n",
                c.strategy, c.msl, c.atom_size, c.seed, c.eos_id, c.pad_id, c.drop_concat_remainder
            ));
            s.push_str(&format!("generator {}\n", manifest.generator));
            s.push_str(&format!("provenance {}\n", if manifest.has_provenance { "yes" } else { "no" }));
            if let Some(h) = &manifest.input_sha256 {
                s.push_str(&format!("input sha256 {h}\n"));
            }
            s.push_str(&format!("payload sha256 {}\n", manifest.payload_sha256));
            if let Some(f) = &manifest.filter_stats {
                s.push_str(&crate::filter::render(f));
            }
            s.push_str(&format!("{}\n", ds.stats));
            for (i, seq) in ds.sequences.iter().take(args.rows).enumerate() {
                let cells: Vec<String> = seq
                    .tokens
                    .iter()
                    .zip(&seq.loss_mask)
                    .map(|(t, &m)| if m { t.to_string() } else { format!("[{t}]") })
                    .collect();
                s.push_str(&format!("row {i}: {}\n", cells.join(" ")));
            }
            emit(&s)
        }
    }
}
