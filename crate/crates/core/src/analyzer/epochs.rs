use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnalyzerError, RunLog};
use crate::accounting::{classify, steps_per_epoch};
use crate::packer::PackedDataset;

/// How progress through an epoch is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpochMode {
    /// Sequences consumed over sequences per epoch.
    Sequence,
    /// Non-pad tokens consumed over non-pad tokens per epoch.
    #[default]
    WordToken,
}

impl fmt::Display for EpochMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpochMode::Sequence => "sequence",
            EpochMode::WordToken => "word-token",
        })
    }
}

impl FromStr for EpochMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequence" => Ok(EpochMode::Sequence),
            "word-token" => Ok(EpochMode::WordToken),
            other => Err(format!("unknown epoch mode {other:?} (expected sequence or word-token)")),
        }
    }
}

/// Per-epoch consumption schedule of one packed dataset. Rows are consumed
/// in dataset order, `batch_size` per step; the last batch may be partial.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSchedule {
    pub batch_size: u64,
    pub sequence_count: u64,
    /// Prefix sums of non-pad tokens per row (`len = sequence_count + 1`);
    /// `None` when only the sequence count is known.
    nonpad_prefix: Option<Vec<u64>>,
}

impl EpochSchedule {
    /// Sequence-mode schedule from counts alone (e.g. a manifest).
    pub fn from_counts(sequence_count: u64, batch_size: u64) -> Self {
        Self {
            batch_size,
            sequence_count,
            nonpad_prefix: None,
        }
    }

    pub fn from_nonpad_counts(counts: &[u64], batch_size: u64) -> Self {
        let mut prefix = Vec::with_capacity(counts.len() + 1);
        prefix.push(0);
        let mut acc = 0;
        for &c in counts {
            acc += c;
            prefix.push(acc);
        }
        Self {
            batch_size,
            sequence_count: counts.len() as u64,
            nonpad_prefix: Some(prefix),
        }
    }

    /// Word-token counts come from provenance; without it only sequence mode is available.
    pub fn from_dataset(ds: &PackedDataset) -> Self {
        let batch = ds.config.batch_size as u64;
        let counts: Option<Vec<u64>> = ds
            .sequences
            .iter()
            .map(|s| classify(s).map(|c| c[0] + c[1]))
            .collect();
        match counts {
            Some(c) => Self::from_nonpad_counts(&c, batch),
            None => Self::from_counts(ds.sequences.len() as u64, batch),
        }
    }

    pub fn steps_per_epoch(&self) -> u64 {
        steps_per_epoch(self.sequence_count, self.batch_size)
    }

    pub fn supports(&self, mode: EpochMode) -> bool {
        mode == EpochMode::Sequence || self.nonpad_prefix.is_some()
    }

    /// Cumulative epochs after `step` completed optimizer steps.
    pub fn epoch_fraction(&self, step: u64, mode: EpochMode) -> Option<f64> {
        let spe = self.steps_per_epoch();
        if spe == 0 {
            return None;
        }
        let whole = step / spe;
        let consumed = ((step % spe) * self.batch_size).min(self.sequence_count);
        let part = match mode {
            EpochMode::Sequence => consumed as f64 / self.sequence_count as f64,
            EpochMode::WordToken => {
                let prefix = self.nonpad_prefix.as_ref()?;
                let total = *prefix.last()?;
                if total == 0 {
                    return None;
                }
                prefix[consumed as usize] as f64 / total as f64
            }
        };
        Some(whole as f64 + part)
    }
}

/// Fills `epoch_fraction` for every entry from `schedule`.
pub fn annotate_epochs(
    log: &RunLog,
    schedule: Option<&EpochSchedule>,
    mode: EpochMode,
) -> Result<RunLog, AnalyzerError> {
    let schedule = schedule
        .filter(|s| s.supports(mode))
        .ok_or_else(|| AnalyzerError::MissingManifest(log.run_id.clone()))?;
    let mut out = log.clone();
    for e in &mut out.entries {
        e.epoch_fraction = Some(schedule.epoch_fraction(e.step, mode).ok_or_else(|| {
            AnalyzerError::InvalidLog {
                run_id: log.run_id.clone(),
                message: "dataset schedule is empty".into(),
            }
        })?);
    }
    out.validate()?;
    Ok(out)
}
