//! Token accounting: where every output token came from, steps per epoch,
//! and the linear compute-optimal token budget.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packer::{PackConfig, PackedDataset, PackedSequence, RunKind};

#[derive(Debug, Error, PartialEq)]
pub enum AccountingError {
    #[error("sequence {0} carries no provenance runs")]
    MissingProvenance(usize),
    #[error("cannot compare stats: {0}")]
    ConfigMismatch(String),
    #[error("parameter count must be positive (got {0})")]
    InvalidParamCount(f64),
}

/// Output token breakdown. `pad_subseq` counts end-of-chunk markers of the
/// padding strategy (EOS is the pad token); `pad_tail` counts tail pads plus
/// any merge-group or kept-remainder fill; `eos_tokens` counts separators of
/// the concatenated stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackStats {
    pub msl: u64,
    pub batch_size: u64,
    pub word_tokens: u64,
    pub eos_tokens: u64,
    pub pad_subseq: u64,
    pub pad_tail: u64,
    pub sequence_count: u64,
    pub steps_per_epoch: u64,
    pub total_output_tokens: u64,
}

impl PackStats {
    /// Tokens that are neither pad nor end-of-chunk marker.
    pub fn non_pad_tokens(&self) -> u64 {
        self.word_tokens + self.eos_tokens
    }

    pub fn pad_fraction(&self) -> f64 {
        if self.total_output_tokens == 0 {
            0.0
        } else {
            (self.pad_subseq + self.pad_tail) as f64 / self.total_output_tokens as f64
        }
    }
}

impl fmt::Display for PackStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sequences         {}", self.sequence_count)?;
        writeln!(f, "msl               {}", self.msl)?;
        writeln!(f, "batch size        {}", self.batch_size)?;
        writeln!(f, "steps per epoch   {}", self.steps_per_epoch)?;
        writeln!(f, "output tokens     {}", self.total_output_tokens)?;
        writeln!(f, "  word            {}", self.word_tokens)?;
        writeln!(f, "  eos (stream)    {}", self.eos_tokens)?;
        writeln!(f, "  pad (chunk end) {}", self.pad_subseq)?;
        writeln!(f, "  pad (tail)      {}", self.pad_tail)?;
        write!(f, "pad fraction      {:.6}", self.pad_fraction())
    }
}

pub fn steps_per_epoch(sequence_count: u64, batch_size: u64) -> u64 {
    sequence_count.div_ceil(batch_size)
}

/// Per-class counts for one row; `None` without provenance.
pub fn classify(seq: &PackedSequence) -> Option<[u64; 4]> {
    if !seq.has_provenance() {
        return None;
    }
    let mut counts = [0u64; 4];
    for r in &seq.runs {
        let slot = match r.kind {
            RunKind::Text { .. } => 0,
            RunKind::Eos => 1,
            RunKind::ChunkEnd => 2,
            RunKind::TailPad | RunKind::FillPad => 3,
        };
        counts[slot] += u64::from(r.len);
    }
    Some(counts)
}

pub fn stats_for(sequences: &[PackedSequence], cfg: &PackConfig) -> Result<PackStats, AccountingError> {
    let mut totals = [0u64; 4];
    for (i, seq) in sequences.iter().enumerate() {
        let counts = classify(seq).ok_or(AccountingError::MissingProvenance(i))?;
        for (t, c) in totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    let sequence_count = sequences.len() as u64;
    let batch_size = cfg.batch_size as u64;
    Ok(PackStats {
        msl: cfg.msl as u64,
        batch_size,
        word_tokens: totals[0],
        eos_tokens: totals[1],
        pad_subseq: totals[2],
        pad_tail: totals[3],
        sequence_count,
        steps_per_epoch: steps_per_epoch(sequence_count, batch_size),
        total_output_tokens: sequences.iter().map(|s| s.tokens.len() as u64).sum(),
    })
}

pub fn compute_stats(ds: &PackedDataset) -> Result<PackStats, AccountingError> {
    stats_for(&ds.sequences, &ds.config)
}

/// 8B training tokens per 400M parameters.
pub const TOKENS_PER_PARAM: f64 = 8e9 / 400e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBudget {
    pub param_count: f64,
    pub optimal_tokens: f64,
    /// `optimal_tokens` over the corpus word tokens, once a corpus is attached.
    pub epochs_equivalent: Option<f64>,
}

impl TokenBudget {
    pub fn with_corpus(mut self, word_tokens: u64) -> Self {
        self.epochs_equivalent = (word_tokens > 0).then(|| self.optimal_tokens / word_tokens as f64);
        self
    }

    /// Optimizer steps needed to consume the budget at `batch_size` x `msl` tokens per step.
    pub fn steps(&self, batch_size: u64, msl: u64) -> u64 {
        (self.optimal_tokens / (batch_size * msl) as f64).ceil() as u64
    }
}

pub fn chinchilla_budget(param_count: f64) -> Result<TokenBudget, AccountingError> {
    if !(param_count > 0.0) || !param_count.is_finite() {
        return Err(AccountingError::InvalidParamCount(param_count));
    }
    Ok(TokenBudget {
        param_count,
        optimal_tokens: param_count * TOKENS_PER_PARAM,
        epochs_equivalent: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepComparison {
    pub msl: u64,
    pub batch_size: u64,
    pub concat_steps: u64,
    pub padding_steps: u64,
    /// padding minus concat.
    pub absolute_overhead: i64,
    /// `absolute_overhead / concat_steps`; 0 when both are empty.
    pub relative_overhead: f64,
}

impl fmt::Display for StepComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "msl {} batch {}: concat {} steps, padding {} steps, overhead {:+} ({:+.2}%)",
            self.msl,
            self.batch_size,
            self.concat_steps,
            self.padding_steps,
            self.absolute_overhead,
            100.0 * self.relative_overhead
        )
    }
}

pub fn compare_step_sizes(
    concat: &PackStats,
    padding: &PackStats,
) -> Result<StepComparison, AccountingError> {
    if concat.msl != padding.msl {
        return Err(AccountingError::ConfigMismatch(format!(
            "msl {} vs {}",
            concat.msl, padding.msl
        )));
    }
    if concat.batch_size != padding.batch_size {
        return Err(AccountingError::ConfigMismatch(format!(
            "batch size {} vs {}",
            concat.batch_size, padding.batch_size
        )));
    }
    let absolute_overhead = padding.steps_per_epoch as i64 - concat.steps_per_epoch as i64;
    let relative_overhead = if concat.steps_per_epoch == 0 {
        if absolute_overhead == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        absolute_overhead as f64 / concat.steps_per_epoch as f64
    };
    Ok(StepComparison {
        msl: concat.msl,
        batch_size: concat.batch_size,
        concat_steps: concat.steps_per_epoch,
        padding_steps: padding.steps_per_epoch,
        absolute_overhead,
        relative_overhead,
    })
}
