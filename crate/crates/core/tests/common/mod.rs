#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use atompack::corpus::{load_pretokenized, Document, ReservedIds};
use atompack::packer::{PackConfig, PackedSequence, RunKind, Strategy, GPT2_EOS_ID};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use oracle::{OracleConfig, Row, Tag};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn toy_corpus() -> Vec<Document> {
    load_pretokenized(
        &fixture("toy_corpus.jsonl"),
        ReservedIds::new(GPT2_EOS_ID, GPT2_EOS_ID),
    )
    .expect("toy corpus loads")
}

pub fn token_lists(docs: &[Document]) -> Vec<Vec<u32>> {
    docs.iter().map(|d| d.tokens.clone()).collect()
}

pub fn docs_from(lists: &[Vec<u32>]) -> Vec<Document> {
    lists
        .iter()
        .enumerate()
        .map(|(i, t)| Document {
            doc_id: i,
            tokens: t.clone(),
            source_index: i,
        })
        .collect()
}

pub fn oracle_config(cfg: &PackConfig) -> OracleConfig {
    OracleConfig {
        padding: cfg.strategy == Strategy::Padding,
        msl: cfg.msl,
        atom: cfg.atom_size,
        seed: cfg.seed,
        eos: cfg.eos_id,
        pad: cfg.pad_id,
        drop_remainder: cfg.drop_concat_remainder,
    }
}

/// Expands library provenance into the oracle's per-token tags.
pub fn tags_of(seq: &PackedSequence) -> Vec<Tag> {
    let mut tags = Vec::with_capacity(seq.tokens.len());
    for r in &seq.runs {
        for k in 0..r.len {
            tags.push(match r.kind {
                RunKind::Text { doc_id, start } => Tag::Word {
                    doc: doc_id as usize,
                    offset: (start + k) as usize,
                },
                RunKind::Eos => Tag::StreamEos,
                RunKind::ChunkEnd => Tag::ChunkEos,
                RunKind::TailPad | RunKind::FillPad => Tag::Pad,
            });
        }
    }
    tags
}

pub fn as_rows(seqs: &[PackedSequence]) -> Vec<Row> {
    seqs.iter()
        .map(|s| Row {
            tokens: s.tokens.clone(),
            tags: tags_of(s),
        })
        .collect()
}

/// Little-endian byte image of the token rows.
pub fn token_bytes<'a>(rows: impl IntoIterator<Item = &'a Vec<u32>>) -> Vec<u8> {
    rows.into_iter()
        .flat_map(|r| r.iter().flat_map(|t| t.to_le_bytes()))
        .collect()
}

/// Short-paragraph corpus: log-normal lengths (median 90 tokens, sigma 0.6),
/// clamped to 1..=1000, so most documents fall in 0-200 tokens. Token ids are
/// uniform in 1..50000.
pub fn synthetic_corpus(n_docs: usize, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lengths = LogNormal::new(90f64.ln(), 0.6).unwrap();
    let lists: Vec<Vec<u32>> = (0..n_docs)
        .map(|_| {
            let len = (lengths.sample(&mut rng).round() as usize).clamp(1, 1000);
            (0..len).map(|_| rng.random_range(1..50_000)).collect()
        })
        .collect();
    docs_from(&lists)
}
