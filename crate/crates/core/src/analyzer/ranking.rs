use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AnalyzerError, RunLog};
use crate::accounting::PackStats;

pub const DEFAULT_SEGMENTS: usize = 100;

/// Absorbs float noise in epoch fractions at segment boundaries.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub index: usize,
    /// Offsets within the final epoch, `[lo, hi)` (last row closed).
    pub lo: f64,
    pub hi: f64,
    /// Per-run mean perplexity, in input run order.
    pub means: Vec<Option<f64>>,
    pub counts: Vec<u64>,
    /// Mid-ranks (1 = lowest perplexity) when every run has data here.
    pub ranks: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    /// Number of the final epoch (1-based) the segments were taken from.
    pub final_epoch: u64,
    pub average_rank: Option<f64>,
    /// Mean perplexity over the last segment.
    pub final_perplexity: f64,
    /// Mean perplexity over the whole final epoch.
    pub final_epoch_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub n_segments: usize,
    pub runs: Vec<RunSummary>,
    pub segments: Vec<SegmentRow>,
    /// Segments left out of ranking because some run had no entries there.
    pub excluded_segments: Vec<usize>,
}

/// Segment index of an absolute epoch position, or `None` outside the final epoch.
fn segment_of(x: f64, final_epoch: u64, n: usize) -> Option<usize> {
    let rel = x - (final_epoch - 1) as f64;
    if rel < -BOUNDARY_EPS || rel > 1.0 + BOUNDARY_EPS {
        return None;
    }
    let k = (rel * n as f64 + BOUNDARY_EPS).floor().max(0.0) as usize;
    Some(k.min(n - 1))
}

fn final_epoch(log: &RunLog) -> Result<u64, AnalyzerError> {
    if !log.is_annotated() {
        return Err(AnalyzerError::NotAnnotated(log.run_id.clone()));
    }
    let last = log
        .entries
        .last()
        .and_then(|e| e.epoch_fraction)
        .ok_or_else(|| AnalyzerError::InsufficientCoverage(format!("run {} is empty", log.run_id)))?;
    Ok(((last - BOUNDARY_EPS).ceil() as u64).max(1))
}

/// Mid-ranks of `values`, 1 = smallest; ties share the mean of their positions.
pub(crate) fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn build_report(logs: &[RunLog], n_segments: usize, rank: bool) -> Result<RankingReport, AnalyzerError> {
    if n_segments == 0 {
        return Err(AnalyzerError::ZeroSegments);
    }
    let epochs: Vec<u64> = logs.iter().map(final_epoch).collect::<Result<_, _>>()?;
    let k = logs.len();
    let mut sums = vec![vec![0.0f64; k]; n_segments];
    let mut counts = vec![vec![0u64; k]; n_segments];
    for (r, (log, &epoch)) in logs.iter().zip(&epochs).enumerate() {
        for e in &log.entries {
            if let Some(s) = segment_of(e.epoch_fraction.unwrap_or(0.0), epoch, n_segments) {
                sums[s][r] += e.perplexity;
                counts[s][r] += 1;
            }
        }
    }

    let mut segments = Vec::with_capacity(n_segments);
    let mut excluded = Vec::new();
    let mut rank_sums = vec![0.0; k];
    let mut ranked = 0usize;
    for s in 0..n_segments {
        let means: Vec<Option<f64>> = (0..k)
            .map(|r| (counts[s][r] > 0).then(|| sums[s][r] / counts[s][r] as f64))
            .collect();
        let ranks = if rank {
            match means.iter().copied().collect::<Option<Vec<f64>>>() {
                Some(full) => {
                    let ranks = mid_ranks(&full);
                    for (acc, r) in rank_sums.iter_mut().zip(&ranks) {
                        *acc += r;
                    }
                    ranked += 1;
                    Some(ranks)
                }
                None => {
                    excluded.push(s);
                    None
                }
            }
        } else {
            None
        };
        segments.push(SegmentRow {
            index: s,
            lo: s as f64 / n_segments as f64,
            hi: (s + 1) as f64 / n_segments as f64,
            means,
            counts: counts[s].clone(),
            ranks,
        });
    }
    if rank && ranked == 0 {
        return Err(AnalyzerError::InsufficientCoverage(
            "no segment has entries from every run".into(),
        ));
    }

    let last = &segments[n_segments - 1];
    let runs = logs
        .iter()
        .enumerate()
        .map(|(r, log)| {
            let final_perplexity = last.means[r].ok_or_else(|| {
                AnalyzerError::InsufficientCoverage(format!(
                    "run {} has no entries in the last segment",
                    log.run_id
                ))
            })?;
            let (total, n) = (0..n_segments).fold((0.0, 0u64), |(t, c), s| (t + sums[s][r], c + counts[s][r]));
            Ok(RunSummary {
                run_id: log.run_id.clone(),
                final_epoch: epochs[r],
                average_rank: rank.then(|| rank_sums[r] / ranked as f64),
                final_perplexity,
                final_epoch_mean: total / n as f64,
            })
        })
        .collect::<Result<Vec<_>, AnalyzerError>>()?;

    Ok(RankingReport {
        n_segments,
        runs,
        segments,
        excluded_segments: excluded,
    })
}

/// Splits each run's final epoch into `n_segments` equal slices, ranks runs
/// by mean perplexity within every slice where all runs have entries, and
/// averages the ranks. Final perplexity is the last slice's mean.
pub fn segment_rank(logs: &[RunLog], n_segments: usize) -> Result<RankingReport, AnalyzerError> {
    if logs.len() < 2 {
        return Err(AnalyzerError::TooFewRuns(logs.len()));
    }
    build_report(logs, n_segments, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run_id: String,
    pub final_perplexity: f64,
    pub average_rank: Option<f64>,
    pub steps_per_epoch: Option<u64>,
    pub last_step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub ranking: RankingReport,
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|r| r.run_id.len()).max().unwrap_or(3).max(3);
        writeln!(
            f,
            "{:<width$}  {:>16}  {:>12}  {:>15}  {:>10}",
            "run", "final perplexity", "average rank", "steps per epoch", "last step"
        )?;
        for r in &self.rows {
            let rank = r.average_rank.map_or("-".to_string(), |x| format!("{x:.2}"));
            let spe = r.steps_per_epoch.map_or("-".to_string(), |x| x.to_string());
            writeln!(
                f,
                "{:<width$}  {:>16.2}  {:>12}  {:>15}  {:>10}",
                r.run_id, r.final_perplexity, rank, spe, r.last_step
            )?;
        }
        if !self.ranking.excluded_segments.is_empty() {
            writeln!(
                f,
                "excluded segments (incomplete coverage): {:?}",
                self.ranking.excluded_segments
            )?;
        }
        Ok(())
    }
}

/// Final perplexity, average rank (two or more runs) and steps per epoch
/// (when the run's packing stats are known) for each run.
pub fn compare_runs(
    logs: &[RunLog],
    stats: &HashMap<String, PackStats>,
    n_segments: usize,
) -> Result<ComparisonReport, AnalyzerError> {
    let ranking = if logs.len() >= 2 {
        segment_rank(logs, n_segments)?
    } else {
        build_report(logs, n_segments, false)?
    };
    let rows = logs
        .iter()
        .zip(&ranking.runs)
        .map(|(log, summary)| ComparisonRow {
            run_id: log.run_id.clone(),
            final_perplexity: summary.final_perplexity,
            average_rank: summary.average_rank,
            steps_per_epoch: stats.get(&log.run_id).map(|s| s.steps_per_epoch),
            last_step: log.entries.last().map_or(0, |e| e.step),
        })
        .collect();
    Ok(ComparisonReport { rows, ranking })
}
