//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Criterion 11 needs external WikiText-103 files:
//! `ATOMPACK_WIKITEXT_RAW` (raw training split, one paragraph per line) and
//! `ATOMPACK_WIKITEXT_TOKENS` (the filtered paragraphs GPT-2 tokenized, one
//! JSON array per line). Either may be set on its own.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use atompack::accounting::{chinchilla_budget, compare_step_sizes};
use atompack::analyzer::{ema_smooth, segment_rank, EmaParams, LogEntry, RunLog};
use atompack::corpus::{
    filter_rows, load_pretokenized, read_raw_rows, tokenize_rows, ByteTokenizer, Document,
    ReservedIds, DEFAULT_MIN_WORDS,
};
use atompack::diagnostics::coherence_report;
use atompack::packer::format::{
    manifest_path, read_dataset, read_manifest, write_dataset, FormatError, WriteOptions,
};
use atompack::packer::{
    pack, table1_batch_size, table1_combinations, PackConfig, PackedDataset, RunKind, Strategy,
    GPT2_EOS_ID,
};
use proptest::strategy::Strategy as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cell::Cell;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use common::oracle::{count_overlaps, count_transitions, reference_pack, Row};
use common::{as_rows, docs_from, fixture, oracle_config, synthetic_corpus, token_bytes, toy_corpus};

type Outcome = Result<String, String>;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

const SYNTHETIC_DOCS: usize = 20_000;
const SYNTHETIC_SEED: u64 = 7;

fn worked_example_docs() -> Vec<Document> {
    load_pretokenized(&fixture("worked_examples.jsonl"), ReservedIds::new(GPT2_EOS_ID, GPT2_EOS_ID))
        .expect("worked example fixture loads")
}

fn raw_fixture_docs() -> Vec<Document> {
    let rows = read_raw_rows(&fixture("raw_paragraphs.txt")).expect("raw fixture loads");
    let (kept, _) = filter_rows(rows, DEFAULT_MIN_WORDS);
    let reserved = ReservedIds::new(ByteTokenizer::FIRST_RESERVED, ByteTokenizer::FIRST_RESERVED);
    tokenize_rows(&kept, &ByteTokenizer, reserved).expect("raw fixture tokenizes")
}

fn masks(ds: &PackedDataset) -> Vec<Vec<bool>> {
    ds.sequences.iter().map(|s| s.loss_mask.clone()).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let docs = toy_corpus();
    ensure!(docs.len() <= 50, "toy corpus has {} documents", docs.len());
    let lengths: Vec<usize> = docs.iter().map(|d| d.tokens.len()).collect();
    ensure!(
        lengths.iter().all(|&l| (1..=300).contains(&l)),
        "toy corpus lengths out of 1..=300"
    );
    let lists = common::token_lists(&docs);
    let combos = table1_combinations();
    for &(strategy, msl, atom) in &combos {
        let cfg = PackConfig::new(strategy, msl, atom);
        let ds = pack(&docs, &cfg).map_err(|e| e.to_string())?;
        let expected = reference_pack(&lists, &oracle_config(&cfg));
        let got = as_rows(&ds.sequences);
        let got_bytes = token_bytes(got.iter().map(|r| &r.tokens));
        let want_bytes = token_bytes(expected.iter().map(|r| &r.tokens));
        ensure!(got_bytes == want_bytes, "{strategy} msl {msl} atom {atom}: token bytes differ");
        ensure!(got == expected, "{strategy} msl {msl} atom {atom}: provenance differs");
        let want_mask: Vec<Vec<bool>> = expected.iter().map(Row::loss_mask).collect();
        ensure!(masks(&ds) == want_mask, "{strategy} msl {msl} atom {atom}: loss mask differs");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.2}s (limit 10s)");
    Ok(format!("{} combinations byte-identical to the reference in {secs:.2}s", combos.len()))
}

fn sorted_rows(ds: &PackedDataset) -> Vec<(Vec<u32>, Vec<RunKind>)> {
    let mut rows: Vec<_> = ds
        .sequences
        .iter()
        .map(|s| (s.tokens.clone(), s.runs.iter().map(|r| r.kind).collect()))
        .collect();
    rows.sort_by(|a: &(Vec<u32>, Vec<RunKind>), b| a.0.cmp(&b.0));
    rows
}

fn criterion_2() -> Outcome {
    let docs = worked_example_docs();
    let (d130, d35) = (&docs[0], &docs[1]);
    ensure!(d130.tokens.len() == 130 && d35.tokens.len() == 35, "fixture lengths wrong");
    let eos = GPT2_EOS_ID;

    let cfg = PackConfig::new(Strategy::Padding, 64, 64);
    let ds = pack(std::slice::from_ref(d130), &cfg).map_err(|e| e.to_string())?;
    let t = &d130.tokens;
    let mut expected: Vec<Vec<u32>> = vec![
        [&t[0..63], &[eos][..]].concat(),
        [&t[63..126], &[eos][..]].concat(),
        [&t[126..130], &[eos; 60][..]].concat(),
    ];
    expected.sort();
    let got: Vec<Vec<u32>> = sorted_rows(&ds).into_iter().map(|r| r.0).collect();
    ensure!(got == expected, "130-token document rows differ: {got:?}");
    let s = ds.stats;
    ensure!(
        (s.word_tokens, s.pad_subseq, s.pad_tail, s.sequence_count) == (130, 2, 60, 3),
        "130-token accounting {s:?}"
    );

    let cfg = PackConfig::new(Strategy::Padding, 32, 128);
    let ds = pack(std::slice::from_ref(d35), &cfg).map_err(|e| e.to_string())?;
    let s = ds.stats;
    ensure!(s.total_output_tokens == 64, "35-token tail occupies {} tokens", s.total_output_tokens);
    ensure!(
        (s.word_tokens, s.pad_tail, s.pad_subseq) == (35, 29, 0),
        "35-token accounting {s:?}"
    );
    let flat: Vec<u32> = ds.sequences.iter().flat_map(|q| q.tokens.clone()).collect();
    ensure!(
        flat[..35] == d35.tokens[..] && flat[35..].iter().all(|&x| x == eos),
        "35-token tail layout wrong"
    );
    Ok("130 tokens -> [63+EOS] [63+EOS] [4+60 pad]; 35 tokens -> 64-token tail with 29 pad".into())
}

fn criterion_3() -> Outcome {
    let corpus = proptest::collection::vec(
        proptest::collection::vec(1u32..2000, 1..=400),
        0..=20,
    );
    let grid = proptest::sample::select(table1_combinations());
    let strategy = (corpus, grid, proptest::num::u64::ANY, proptest::bool::ANY);
    let config = Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let max_loss = Cell::new(0usize);
    let result = runner.run(
        &strategy.prop_map(|x| x),
        |(lists, (_, msl, atom), seed, drop)| {
            let docs = docs_from(&lists);
            let eos = 0;
            let pad = 1_000_000;

            let mut cfg = PackConfig::new(Strategy::Padding, msl, atom).with_eos(eos).with_seed(seed);
            cfg.pad_id = pad;
            let ds = pack(&docs, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let mut want: HashMap<u32, i64> = HashMap::new();
            for &t in lists.iter().flatten() {
                *want.entry(t).or_default() += 1;
            }
            let mut got: HashMap<u32, i64> = HashMap::new();
            for &t in ds.sequences.iter().flat_map(|s| &s.tokens) {
                if t != eos && t != pad {
                    *got.entry(t).or_default() += 1;
                }
            }
            if got != want {
                return Err(TestCaseError::fail("padding changed the word multiset"));
            }

            cfg.strategy = Strategy::Concat;
            cfg.drop_concat_remainder = drop;
            let ds = pack(&docs, &cfg).map_err(|e| TestCaseError::fail(e.to_string()))?;
            let stream_len: usize = lists.iter().map(|d| d.len() + 1).sum();
            *want.entry(eos).or_default() += lists.len() as i64;
            let mut kept = 0usize;
            for &t in ds.sequences.iter().flat_map(|s| &s.tokens) {
                if t == pad {
                    continue;
                }
                let slot = want.entry(t).or_default();
                *slot -= 1;
                if *slot < 0 {
                    return Err(TestCaseError::fail(format!("concat emitted extra token {t}")));
                }
                kept += 1;
            }
            let lost = stream_len - kept;
            if lost >= atom {
                return Err(TestCaseError::fail(format!("concat lost {lost} >= {atom} tokens")));
            }
            max_loss.set(max_loss.get().max(lost));
            Ok(())
        },
    );
    result.map_err(|e| e.to_string())?;
    Ok(format!("1000 random corpora; largest concat loss {} tokens", max_loss.get()))
}

fn criterion_4() -> Outcome {
    let docs = toy_corpus();
    let mut synthetic = synthetic_corpus(3000, SYNTHETIC_SEED);
    synthetic.truncate(3000);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for (name, corpus) in [("toy", &docs), ("synthetic", &synthetic)] {
        for (strategy, msl, atom) in table1_combinations() {
            let cfg = PackConfig::new(strategy, msl, atom);
            let mut images: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
            for threads in [1, 4, 8] {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| e.to_string())?;
                let path = dir.path().join(format!("{name}-{strategy}-{msl}-{atom}-{threads}.atpk"));
                pool.install(|| -> Result<(), String> {
                    let ds = pack(corpus, &cfg).map_err(|e| e.to_string())?;
                    write_dataset(&ds, &path, &WriteOptions::default()).map_err(|e| e.to_string())?;
                    Ok(())
                })?;
                let data = std::fs::read(&path).map_err(|e| e.to_string())?;
                let manifest = std::fs::read(manifest_path(&path)).map_err(|e| e.to_string())?;
                // The manifest names its own file, which differs per thread count.
                let manifest = String::from_utf8_lossy(&manifest)
                    .replace(&path.file_name().unwrap().to_string_lossy().into_owned(), "DATA")
                    .into_bytes();
                images.push((data, manifest));
            }
            ensure!(
                images.windows(2).all(|w| w[0] == w[1]),
                "{name} {strategy} msl {msl} atom {atom}: files differ across thread counts"
            );
            checked += 1;
        }
    }
    Ok(format!("{checked} configurations bit-identical at 1, 4 and 8 threads"))
}

fn criterion_5(synthetic: &[Document]) -> Outcome {
    let start = Instant::now();
    let mut overheads = Vec::new();
    let mut lines = Vec::new();
    for msl in [32, 64, 128] {
        let batch = table1_batch_size(msl);
        let stats = |s| -> Result<_, String> {
            let cfg = PackConfig::new(s, msl, msl).with_batch_size(batch);
            Ok(pack(synthetic, &cfg).map_err(|e| e.to_string())?.stats)
        };
        let cmp = compare_step_sizes(&stats(Strategy::Concat)?, &stats(Strategy::Padding)?)
            .map_err(|e| e.to_string())?;
        ensure!(
            cmp.padding_steps > cmp.concat_steps,
            "msl {msl}: padding {} steps <= concat {} steps",
            cmp.padding_steps,
            cmp.concat_steps
        );
        lines.push(format!(
            "msl {msl}: {}/{} (+{:.2}%)",
            cmp.concat_steps,
            cmp.padding_steps,
            100.0 * cmp.relative_overhead
        ));
        overheads.push(cmp.relative_overhead);
    }
    ensure!(
        overheads.windows(2).all(|w| w[0] <= w[1]),
        "relative overhead not nondecreasing: {}",
        lines.join(", ")
    );
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.2}s (limit 30s)");
    Ok(format!("concat/padding steps {}", lines.join(", ")))
}

fn criterion_6(synthetic: &[Document]) -> Outcome {
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for msl in [32, 64, 128] {
        let sweep: Vec<usize> = [msl / 4, msl / 2, msl, 2 * msl, 4 * msl].to_vec();
        let mut subseq = Vec::new();
        let mut tail = Vec::new();
        for &atom in &sweep {
            let cfg = PackConfig::new(Strategy::Padding, msl, atom);
            let s = pack(synthetic, &cfg).map_err(|e| e.to_string())?.stats;
            subseq.push(s.pad_subseq);
            tail.push(s.pad_tail);
        }
        let dec = subseq.windows(2).all(|w| w[0] > w[1]);
        let inc = tail.windows(2).all(|w| w[0] < w[1]);
        lines.push(format!("msl {msl}: pad_subseq {subseq:?} pad_tail {tail:?}"));
        if !dec {
            failures.push(format!("msl {msl}: pad_subseq not strictly decreasing {subseq:?}"));
        }
        if !inc {
            failures.push(format!("msl {msl}: pad_tail not strictly increasing {tail:?}"));
        }
    }
    if failures.is_empty() {
        Ok(lines.join("; "))
    } else {
        Err(format!("{} | observed {}", failures.join("; "), lines.join("; ")))
    }
}

fn criterion_7() -> Outcome {
    let small = chinchilla_budget(124e6).map_err(|e| e.to_string())?;
    let large = chinchilla_budget(400e6).map_err(|e| e.to_string())?;
    ensure!(small.optimal_tokens == 2.48e9, "124e6 -> {}", small.optimal_tokens);
    ensure!(large.optimal_tokens == 8e9, "400e6 -> {}", large.optimal_tokens);
    Ok("124e6 -> 2.48e9 tokens, 400e6 -> 8e9 tokens".into())
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Four runs, two epochs, two log points per final-epoch segment.
/// A is best everywhere in the first half, C in the second; B and C tie in
/// the first half; D is always worst.
fn constructed_logs() -> (Vec<RunLog>, HashMap<&'static str, [f64; 2]>) {
    let bases: HashMap<&'static str, [f64; 2]> = HashMap::from([
        ("A", [10.0, 10.0]),
        ("B", [20.0, 20.0]),
        ("C", [20.0, 5.0]),
        ("D", [30.0, 30.0]),
    ]);
    let per_epoch = 200u64;
    let logs = ["A", "B", "C", "D"]
        .iter()
        .map(|&id| {
            let entries = (1..=2 * per_epoch)
                .map(|step| {
                    let half = usize::from(step > per_epoch + per_epoch / 2);
                    LogEntry {
                        step,
                        epoch_fraction: Some((step as f64 - 0.5) / per_epoch as f64),
                        perplexity: bases[id][half] + 0.25 * ((step - 1) % 2) as f64
                            + if step <= per_epoch { 100.0 } else { 0.0 },
                    }
                })
                .collect();
            RunLog::new(id, entries).unwrap()
        })
        .collect();
    (logs, bases)
}

fn criterion_8() -> Outcome {
    let text = std::fs::read_to_string(fixture("ema_series.json")).map_err(|e| e.to_string())?;
    let series: HashMap<String, Vec<f64>> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure!(series.len() == 3, "expected 3 EMA fixture series");
    let mut worst: f64 = 0.0;
    for (name, ys) in &series {
        for params in [EmaParams::default(), EmaParams::new(0.25), EmaParams::with_weight(1.0)] {
            let a = params.alpha.sqrt().min(params.cap);
            let mut hand = vec![ys[0]];
            for &y in &ys[1..] {
                let prev = *hand.last().unwrap();
                hand.push(a * y + (1.0 - a) * prev);
            }
            let got = ema_smooth(ys, params).map_err(|e| e.to_string())?;
            ensure!(got.len() == hand.len(), "{name}: length differs");
            for (g, h) in got.iter().zip(&hand) {
                worst = worst.max(rel_err(*g, *h));
            }
        }
    }
    ensure!(worst <= 1e-12, "EMA relative error {worst:e}");
    let identity = ema_smooth(&series["decaying"], EmaParams::with_weight(1.0)).unwrap();
    ensure!(identity == series["decaying"], "weight 1 is not the identity");

    let (logs, bases) = constructed_logs();
    let report = segment_rank(&logs, 100).map_err(|e| e.to_string())?;
    ensure!(report.excluded_segments.is_empty(), "segments excluded: {:?}", report.excluded_segments);
    for seg in &report.segments {
        let want = if seg.index < 50 {
            vec![1.0, 2.5, 2.5, 4.0]
        } else {
            vec![2.0, 3.0, 1.0, 4.0]
        };
        ensure!(seg.counts.iter().all(|&c| c == 2), "segment {} counts {:?}", seg.index, seg.counts);
        ensure!(
            seg.ranks.as_ref() == Some(&want),
            "segment {} ranks {:?}, want {want:?}",
            seg.index,
            seg.ranks
        );
    }
    let want_avg = [1.5, 2.75, 1.75, 4.0];
    for (run, avg) in report.runs.iter().zip(want_avg) {
        ensure!(run.final_epoch == 2, "{} final epoch {}", run.run_id, run.final_epoch);
        ensure!(
            run.average_rank == Some(avg),
            "{} average rank {:?}, want {avg}",
            run.run_id,
            run.average_rank
        );
        let want_final = bases[run.run_id.as_str()][1] + 0.125;
        let err = rel_err(run.final_perplexity, want_final);
        ensure!(err <= 1e-9, "{} final perplexity {} vs {want_final}", run.run_id, run.final_perplexity);
    }
    Ok(format!("EMA max relative error {worst:e}; ranks with ties and final perplexities exact"))
}

fn criterion_9(synthetic: &[Document]) -> Outcome {
    let toy = toy_corpus();
    let mut corpora: Vec<(&str, Vec<Document>)> = vec![
        ("toy", toy.clone()),
        ("worked", worked_example_docs()),
        ("raw", raw_fixture_docs()),
        ("synthetic", synthetic.to_vec()),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let n = rng.random_range(1..30);
        let lists: Vec<Vec<u32>> = (0..n)
            .map(|_| (0..rng.random_range(1..600)).map(|_| rng.random_range(1..1000)).collect())
            .collect();
        corpora.push(("random", docs_from(&lists)));
    }
    for (name, docs) in &corpora {
        for msl in [32, 64, 128] {
            let cfg = PackConfig::new(Strategy::Padding, msl, msl);
            let r = coherence_report(&pack(docs, &cfg).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            ensure!(
                r.cross_doc_transition_fraction == 0.0 && r.sequences_single_doc_fraction == 1.0,
                "{name} msl {msl}: padding atom=msl gives {r:?}"
            );
        }
    }

    let lists = common::token_lists(&toy);
    let mut half = Vec::new();
    let mut double = Vec::new();
    for msl in [32, 64, 128] {
        for strategy in [Strategy::Padding, Strategy::Concat] {
            let cfg = PackConfig::new(strategy, msl, msl / 2);
            let r = coherence_report(&pack(&toy, &cfg).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let (cross, eligible) = count_transitions(&reference_pack(&lists, &oracle_config(&cfg)));
            ensure!(
                (r.cross_doc_transitions, r.eligible_pairs) == (cross, eligible),
                "{strategy} msl {msl} atom {}: {}/{} vs oracle {cross}/{eligible}",
                msl / 2,
                r.cross_doc_transitions,
                r.eligible_pairs
            );
            ensure!(
                r.cross_doc_transition_fraction == cross as f64 / eligible as f64,
                "{strategy} msl {msl}: fraction differs from oracle"
            );
            ensure!(cross > 0, "{strategy} msl {msl} atom {}: no cross-doc pairs", msl / 2);
            half.push(format!("{strategy}/{msl} {cross}/{eligible}"));

            let cfg = PackConfig::new(strategy, msl, 2 * msl).with_seed(42);
            let r = coherence_report(&pack(&toy, &cfg).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            let (hits, pairs) = count_overlaps(&reference_pack(&lists, &oracle_config(&cfg)));
            ensure!(
                (r.overlapping_adjacent_sequences, r.adjacent_sequence_pairs) == (hits, pairs),
                "{strategy} msl {msl} atom {}: overlap {}/{} vs oracle {hits}/{pairs}",
                2 * msl,
                r.overlapping_adjacent_sequences,
                r.adjacent_sequence_pairs
            );
            ensure!(
                r.adjacent_sequence_overlap == hits as f64 / pairs as f64,
                "{strategy} msl {msl}: overlap fraction differs from oracle"
            );
            double.push(format!("{strategy}/{msl} {hits}/{pairs}"));
        }
    }
    Ok(format!(
        "atom=msl clean on {} corpora; 0.5x cross-doc [{}]; 2x overlap [{}]",
        corpora.len(),
        half.join(", "),
        double.join(", ")
    ))
}

fn expect_err(
    what: &str,
    result: Result<PackedDataset, FormatError>,
    ok: impl Fn(&FormatError) -> bool,
) -> Result<(), String> {
    match result {
        Ok(_) => Err(format!("{what}: corrupted file was accepted")),
        Err(e) if ok(&e) => Ok(()),
        Err(e) => Err(format!("{what}: wrong error {e:?}")),
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixtures = [("toy", toy_corpus()), ("worked", worked_example_docs()), ("raw", raw_fixture_docs())];
    let mut round_trips = 0;
    for (name, docs) in &fixtures {
        for (strategy, msl, atom) in table1_combinations() {
            let mut cfg = PackConfig::new(strategy, msl, atom);
            if *name == "raw" {
                cfg = cfg.with_eos(ByteTokenizer::FIRST_RESERVED);
            }
            let ds = pack(docs, &cfg).map_err(|e| e.to_string())?;
            for skip_provenance in [false, true] {
                let path = dir.path().join(format!("{name}-{strategy}-{msl}-{atom}-{skip_provenance}.atpk"));
                let opts = WriteOptions {
                    skip_provenance,
                    ..WriteOptions::default()
                };
                write_dataset(&ds, &path, &opts).map_err(|e| e.to_string())?;
                let back = read_dataset(&path).map_err(|e| e.to_string())?;
                if skip_provenance {
                    ensure!(
                        back.sequences.iter().zip(&ds.sequences).all(|(a, b)| {
                            a.tokens == b.tokens && a.loss_mask == b.loss_mask && a.runs.is_empty()
                        }) && back.sequences.len() == ds.sequences.len(),
                        "{name} {strategy} {msl} {atom}: tokens or mask changed"
                    );
                    ensure!(
                        back.stats == ds.stats && back.config == ds.config,
                        "{name} {strategy} {msl} {atom}: manifest stats changed"
                    );
                } else {
                    ensure!(back == ds, "{name} {strategy} {msl} {atom}: round trip is not identity");
                }
                round_trips += 1;
            }
        }
    }

    let ds = pack(&toy_corpus(), &PackConfig::new(Strategy::Padding, 64, 32)).map_err(|e| e.to_string())?;
    let good = dir.path().join("good.atpk");
    write_dataset(&ds, &good, &WriteOptions::default()).map_err(|e| e.to_string())?;
    let bytes = std::fs::read(&good).map_err(|e| e.to_string())?;
    let manifest_text = std::fs::read_to_string(manifest_path(&good)).map_err(|e| e.to_string())?;
    let variant = |tag: &str, data: &[u8], manifest: Option<&str>| -> Result<PackedDataset, FormatError> {
        let p = dir.path().join(format!("{tag}.atpk"));
        std::fs::write(&p, data).unwrap();
        if let Some(m) = manifest {
            std::fs::write(manifest_path(&p), m).unwrap();
        }
        read_dataset(&p)
    };
    let is_format = |e: &FormatError| matches!(e, FormatError::Format { .. });
    let is_checksum = |e: &FormatError| matches!(e, FormatError::ChecksumMismatch { .. });

    let mut flipped = bytes.clone();
    flipped[40] ^= 0x01;
    expect_err("flipped payload byte", variant("flip", &flipped, Some(&manifest_text)), is_checksum)?;
    expect_err(
        "truncated file",
        variant("trunc", &bytes[..bytes.len() / 2], Some(&manifest_text)),
        is_format,
    )?;
    let mut magic = bytes.clone();
    magic[0] = b'X';
    expect_err("bad magic", variant("magic", &magic, Some(&manifest_text)), is_format)?;
    let mut version = bytes.clone();
    version[4] = 9;
    expect_err("bad version", variant("version", &version, Some(&manifest_text)), is_format)?;
    let mut trailing = bytes.clone();
    trailing.push(0);
    expect_err("trailing bytes", variant("trail", &trailing, Some(&manifest_text)), is_format)?;
    expect_err("missing manifest", variant("nomanifest", &bytes, None), |e| {
        matches!(e, FormatError::Io { .. })
    })?;

    let mut manifest = read_manifest(&manifest_path(&good)).map_err(|e| e.to_string())?;
    manifest.config.eos_id += 1;
    let tampered = serde_json::to_string(&manifest).unwrap();
    expect_err("manifest eos tampered", variant("eos", &bytes, Some(&tampered)), |e| {
        matches!(e, FormatError::ManifestMismatch { .. })
    })?;
    let mut manifest = read_manifest(&manifest_path(&good)).map_err(|e| e.to_string())?;
    manifest.payload_sha256 = "0".repeat(64);
    let tampered = serde_json::to_string(&manifest).unwrap();
    expect_err("manifest checksum tampered", variant("sha", &bytes, Some(&tampered)), is_checksum)?;
    let mut manifest = read_manifest(&manifest_path(&good)).map_err(|e| e.to_string())?;
    manifest.pack_stats.pad_tail += 1;
    let tampered = serde_json::to_string(&manifest).unwrap();
    expect_err("manifest stats tampered", variant("stats", &bytes, Some(&tampered)), |e| {
        matches!(e, FormatError::ManifestMismatch { .. })
    })?;
    expect_err("garbage manifest", variant("garbage", &bytes, Some("{not json")), is_format)?;

    match write_dataset(&ds, &good, &WriteOptions::default()) {
        Err(FormatError::AlreadyExists(_)) => {}
        other => return Err(format!("overwrite without flag: {other:?}")),
    }
    Ok(format!("{round_trips} round trips identical; 10 corruption cases rejected with the documented errors"))
}

fn criterion_11() -> Option<Outcome> {
    let raw = std::env::var_os("ATOMPACK_WIKITEXT_RAW");
    let tokens = std::env::var_os("ATOMPACK_WIKITEXT_TOKENS");
    if raw.is_none() && tokens.is_none() {
        return None;
    }
    Some((|| {
        let mut lines = Vec::new();
        if let Some(raw) = raw {
            let rows = read_raw_rows(Path::new(&raw)).map_err(|e| e.to_string())?;
            let (_, stats) = filter_rows(rows, DEFAULT_MIN_WORDS);
            let rows_pp = 100.0 * stats.row_drop_fraction;
            let words_pp = 100.0 * stats.word_drop_fraction;
            ensure!((rows_pp - 55.62).abs() <= 0.5, "row drop {rows_pp:.2}% vs 55.62% (+-0.5pp)");
            ensure!((words_pp - 2.45).abs() <= 0.5, "word drop {words_pp:.2}% vs 2.45% (+-0.5pp)");
            lines.push(format!("drops {rows_pp:.2}% rows / {words_pp:.2}% words"));
        }
        if let Some(tok) = tokens {
            let docs = load_pretokenized(Path::new(&tok), ReservedIds::new(GPT2_EOS_ID, GPT2_EOS_ID))
                .map_err(|e| e.to_string())?;
            let expected = [(32, 28120u64, 31816u64), (64, 14058, 17308), (128, 14056, 20496)];
            for (msl, concat_want, padding_want) in expected {
                let batch = table1_batch_size(msl);
                for (strategy, want) in [(Strategy::Concat, concat_want), (Strategy::Padding, padding_want)] {
                    let cfg = PackConfig::new(strategy, msl, msl).with_batch_size(batch);
                    let got = pack(&docs, &cfg).map_err(|e| e.to_string())?.stats.steps_per_epoch;
                    ensure!(got.abs_diff(want) <= 2, "{strategy} msl {msl}: {got} steps vs {want} (+-2)");
                    lines.push(format!("{strategy}/{msl} {got}"));
                }
            }
        }
        Ok(lines.join("; "))
    })())
}

fn run(f: impl FnOnce() -> Outcome) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(msg)) => Verdict::Pass(msg),
        Ok(Err(msg)) => Verdict::Fail(msg),
        Err(panic) => Verdict::Fail(format!(
            "panicked: {}",
            panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        )),
    }
}

fn main() -> ExitCode {
    let synthetic = synthetic_corpus(SYNTHETIC_DOCS, SYNTHETIC_SEED);
    let verdicts = vec![
        ("oracle equivalence on the toy corpus", run(criterion_1)),
        ("worked padding examples", run(criterion_2)),
        ("conservation on 1000 random corpora", run(criterion_3)),
        ("determinism across thread counts", run(criterion_4)),
        ("padding needs more steps than concat", run(|| criterion_5(&synthetic))),
        ("pad sources across the atom sweep", run(|| criterion_6(&synthetic))),
        ("chinchilla arithmetic", run(criterion_7)),
        ("analyzer EMA and ranking", run(criterion_8)),
        ("coherence diagnostics", run(|| criterion_9(&synthetic))),
        ("dataset file round trip", run(criterion_10)),
        (
            "WikiText-103 reproduction",
            match criterion_11() {
                None => Verdict::Skip("set ATOMPACK_WIKITEXT_RAW and/or ATOMPACK_WIKITEXT_TOKENS".into()),
                Some(outcome) => run(|| outcome),
            },
        ),
    ];
    let mut failed = 0;
    for (i, (name, verdict)) in verdicts.iter().enumerate() {
        let (tag, msg) = match verdict {
            Verdict::Pass(m) => ("PASS", m),
            Verdict::Fail(m) => {
                failed += 1;
                ("FAIL", m)
            }
            Verdict::Skip(m) => ("SKIP", m),
        };
        println!("[{tag}] criterion {:>2}: {name}: {msg}", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        verdicts.iter().filter(|v| matches!(v.1, Verdict::Pass(_))).count()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
