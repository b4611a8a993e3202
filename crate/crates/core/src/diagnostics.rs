//! Deterministic coherence and correlation measurements over a packed
//! dataset, plus a count-based n-gram probe perplexity.
//!
//! These are operational definitions chosen for this tool:
//!
//! * cross-document transition fraction: with EOS and pad positions removed
//!   from each row, the share of adjacent text-token pairs whose documents
//!   differ;
//! * adjacent-sequence overlap: among consecutive row pairs, the share whose
//!   referenced document sets intersect;
//! * single-document fraction: rows whose text comes from exactly one document.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packer::{PackedDataset, PackedSequence, RunKind};
use crate::TokenId;

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("sequence {0} carries no provenance runs")]
    MissingProvenance(usize),
    #[error("evaluation set has no scored positions")]
    EmptyEval,
    #[error("probe order must be at least 1")]
    InvalidOrder,
    #[error("smoothing constant must be positive")]
    InvalidSmoothing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub cross_doc_transitions: u64,
    pub eligible_pairs: u64,
    pub cross_doc_transition_fraction: f64,
    pub overlapping_adjacent_sequences: u64,
    pub adjacent_sequence_pairs: u64,
    pub adjacent_sequence_overlap: f64,
    pub single_doc_sequences: u64,
    pub sequences: u64,
    pub sequences_single_doc_fraction: f64,
}

impl fmt::Display for CoherenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "cross-doc transition fraction  {:.6}  ({}/{})",
            self.cross_doc_transition_fraction, self.cross_doc_transitions, self.eligible_pairs
        )?;
        writeln!(
            f,
            "adjacent sequence overlap      {:.6}  ({}/{})",
            self.adjacent_sequence_overlap,
            self.overlapping_adjacent_sequences,
            self.adjacent_sequence_pairs
        )?;
        write!(
            f,
            "single-document sequences      {:.6}  ({}/{})",
            self.sequences_single_doc_fraction, self.single_doc_sequences, self.sequences
        )
    }
}

fn fraction(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// (cross-doc pairs, eligible pairs) within one row. Reserved positions are
/// skipped, so text on either side of an EOS or pad run forms a pair.
fn transitions(seq: &PackedSequence) -> (u64, u64) {
    let mut cross = 0;
    let mut eligible = 0;
    let mut prev: Option<u32> = None;
    for r in &seq.runs {
        if let RunKind::Text { doc_id, .. } = r.kind {
            eligible += u64::from(r.len - 1);
            if let Some(prev_doc) = prev {
                eligible += 1;
                cross += u64::from(prev_doc != doc_id);
            }
            prev = Some(doc_id);
        }
    }
    (cross, eligible)
}

pub fn coherence_report(ds: &PackedDataset) -> Result<CoherenceReport, DiagnosticsError> {
    if let Some(i) = ds.sequences.iter().position(|s| !s.has_provenance()) {
        return Err(DiagnosticsError::MissingProvenance(i));
    }
    let doc_sets: Vec<Vec<u32>> = ds.sequences.par_iter().map(PackedSequence::doc_ids).collect();
    let (cross, eligible) = ds
        .sequences
        .par_iter()
        .map(transitions)
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let overlapping = doc_sets
        .windows(2)
        .filter(|w| w[0].iter().any(|d| w[1].binary_search(d).is_ok()))
        .count() as u64;
    let pairs = doc_sets.len().saturating_sub(1) as u64;
    let single = doc_sets.iter().filter(|d| d.len() == 1).count() as u64;
    let n = doc_sets.len() as u64;
    Ok(CoherenceReport {
        cross_doc_transitions: cross,
        eligible_pairs: eligible,
        cross_doc_transition_fraction: fraction(cross, eligible),
        overlapping_adjacent_sequences: overlapping,
        adjacent_sequence_pairs: pairs,
        adjacent_sequence_overlap: fraction(overlapping, pairs),
        single_doc_sequences: single,
        sequences: n,
        sequences_single_doc_fraction: fraction(single, n),
    })
}

const START: u64 = u64::MAX;

/// Add-k smoothed n-gram counts over loss-mask positions. Contexts are the
/// preceding `order - 1` tokens of the same row, padded with a start symbol.
#[derive(Debug, Clone)]
pub struct ProbeModel {
    pub order: usize,
    pub smoothing: f64,
    /// Vocabulary size for smoothing; defaults to the number of distinct ids
    /// seen in training and evaluation data.
    pub vocab_size: Option<usize>,
    counts: HashMap<Vec<u64>, HashMap<TokenId, u64>>,
    context_totals: HashMap<Vec<u64>, u64>,
    seen: HashSet<TokenId>,
}

impl Default for ProbeModel {
    fn default() -> Self {
        Self::new(2, 1.0)
    }
}

fn context(tokens: &[TokenId], i: usize, order: usize) -> Vec<u64> {
    (1..order)
        .rev()
        .map(|back| i.checked_sub(back).map_or(START, |j| u64::from(tokens[j])))
        .collect()
}

impl ProbeModel {
    pub fn new(order: usize, smoothing: f64) -> Self {
        Self {
            order,
            smoothing,
            vocab_size: None,
            counts: HashMap::new(),
            context_totals: HashMap::new(),
            seen: HashSet::new(),
        }
    }

    pub fn with_vocab_size(mut self, vocab_size: usize) -> Self {
        self.vocab_size = Some(vocab_size);
        self
    }

    fn check(&self) -> Result<(), DiagnosticsError> {
        if self.order == 0 {
            return Err(DiagnosticsError::InvalidOrder);
        }
        if !(self.smoothing > 0.0) {
            return Err(DiagnosticsError::InvalidSmoothing);
        }
        Ok(())
    }

    pub fn fit(mut self, train: &PackedDataset) -> Result<Self, DiagnosticsError> {
        self.check()?;
        for seq in &train.sequences {
            for (i, (&tok, &scored)) in seq.tokens.iter().zip(&seq.loss_mask).enumerate() {
                self.seen.insert(tok);
                if !scored {
                    continue;
                }
                let ctx = context(&seq.tokens, i, self.order);
                *self.context_totals.entry(ctx.clone()).or_default() += 1;
                *self.counts.entry(ctx).or_default().entry(tok).or_default() += 1;
            }
        }
        Ok(self)
    }

    fn probability(&self, ctx: &[u64], tok: TokenId, vocab: usize) -> f64 {
        let hits = self
            .counts
            .get(ctx)
            .and_then(|m| m.get(&tok))
            .copied()
            .unwrap_or(0);
        let total = self.context_totals.get(ctx).copied().unwrap_or(0);
        (hits as f64 + self.smoothing) / (total as f64 + self.smoothing * vocab as f64)
    }

    /// `exp(-mean log p)` over the loss-mask positions of `eval`, summed in row order.
    pub fn perplexity(&self, eval: &PackedDataset) -> Result<f64, DiagnosticsError> {
        self.check()?;
        let vocab = self.vocab_size.unwrap_or_else(|| {
            let mut all = self.seen.clone();
            all.extend(eval.sequences.iter().flat_map(|s| s.tokens.iter().copied()));
            all.len()
        });
        let mut log_sum = 0.0;
        let mut n = 0u64;
        for seq in &eval.sequences {
            for (i, (&tok, &scored)) in seq.tokens.iter().zip(&seq.loss_mask).enumerate() {
                if scored {
                    log_sum += self.probability(&context(&seq.tokens, i, self.order), tok, vocab).ln();
                    n += 1;
                }
            }
        }
        if n == 0 {
            return Err(DiagnosticsError::EmptyEval);
        }
        Ok((-log_sum / n as f64).exp())
    }
}

/// Fits `model` on `train` and scores `eval`.
pub fn probe_perplexity(
    train: &PackedDataset,
    eval: &PackedDataset,
    model: ProbeModel,
) -> Result<f64, DiagnosticsError> {
    model.fit(train)?.perplexity(eval)
}
