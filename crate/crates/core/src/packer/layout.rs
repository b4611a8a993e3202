//! Per-position provenance. Every atom and packed sequence carries a list of
//! runs that tiles its token vector exactly, so each output token can be
//! traced to a document offset or classified as a separator or pad.

use serde::{Deserialize, Serialize};

use crate::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RunKind {
    /// Document tokens `doc[start..start + len]`.
    Text { doc_id: u32, start: u32 },
    /// Separator between documents in the concatenated stream.
    Eos,
    /// End marker closing a full padding-strategy chunk.
    ChunkEnd,
    /// Pads completing a document tail.
    TailPad,
    /// Pads completing an incomplete merge group or a kept stream remainder.
    FillPad,
}

impl RunKind {
    pub fn is_pad(self) -> bool {
        matches!(self, RunKind::TailPad | RunKind::FillPad)
    }

    pub fn is_text(self) -> bool {
        matches!(self, RunKind::Text { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Run {
    pub pos: u32,
    pub len: u32,
    pub kind: RunKind,
}

impl Run {
    pub fn end(&self) -> u32 {
        self.pos + self.len
    }
}

/// Provenance entry for a run of document tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Span {
    pub doc_id: u32,
    /// Offset within the document.
    pub start: u32,
    pub len: u32,
    /// Offset within the owning atom or sequence.
    pub pos: u32,
}

pub fn spans(runs: &[Run]) -> impl Iterator<Item = Span> + '_ {
    runs.iter().filter_map(|r| match r.kind {
        RunKind::Text { doc_id, start } => Some(Span {
            doc_id,
            start,
            len: r.len,
            pos: r.pos,
        }),
        _ => None,
    })
}

/// Sorted, deduplicated document ids referenced by `runs`.
pub fn doc_ids(runs: &[Run]) -> Vec<u32> {
    let mut ids: Vec<u32> = spans(runs).map(|s| s.doc_id).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Appends `run` at the current end of `runs`.
pub(crate) fn push_run(runs: &mut Vec<Run>, len: usize, kind: RunKind) {
    if len == 0 {
        return;
    }
    let pos = runs.last().map_or(0, Run::end);
    runs.push(Run {
        pos,
        len: len as u32,
        kind,
    });
}

/// Appends `other` shifted by `offset` positions.
pub(crate) fn extend_shifted(runs: &mut Vec<Run>, other: &[Run], offset: u32) {
    runs.extend(other.iter().map(|r| Run {
        pos: r.pos + offset,
        ..*r
    }));
}

/// Runs restricted to `[start, end)`, rebased to 0.
pub(crate) fn slice_runs(runs: &[Run], start: u32, end: u32) -> Vec<Run> {
    let first = runs.partition_point(|r| r.end() <= start);
    runs[first..]
        .iter()
        .take_while(|r| r.pos < end)
        .map(|r| {
            let lo = r.pos.max(start);
            let hi = r.end().min(end);
            let kind = match r.kind {
                RunKind::Text { doc_id, start: s } => RunKind::Text {
                    doc_id,
                    start: s + (lo - r.pos),
                },
                k => k,
            };
            Run {
                pos: lo - start,
                len: hi - lo,
                kind,
            }
        })
        .collect()
}

/// Loss participation per position: true for text and end markers; a pad run
/// contributes only its first position, and only when it directly follows
/// document text (the pad then doubles as the end marker).
pub fn loss_mask(runs: &[Run], len: usize) -> Vec<bool> {
    let mut mask = vec![true; len];
    let mut prev_text = false;
    for r in runs {
        if r.kind.is_pad() {
            let skip = usize::from(prev_text);
            for m in &mut mask[r.pos as usize + skip..r.end() as usize] {
                *m = false;
            }
        }
        prev_text = r.kind.is_text();
    }
    mask
}

/// Checks that `runs` tiles `tokens` and that every position carries the token
/// its kind implies. `docs` is consulted for text runs when given.
pub fn check_tiling(
    tokens: &[TokenId],
    runs: &[Run],
    eos_id: TokenId,
    pad_id: TokenId,
    docs: Option<&[crate::corpus::Document]>,
) -> Result<(), String> {
    let mut cursor = 0u32;
    for r in runs {
        if r.pos != cursor {
            return Err(format!("run at {} does not start at cursor {}", r.pos, cursor));
        }
        if r.len == 0 {
            return Err(format!("empty run at {}", r.pos));
        }
        let end = r.end() as usize;
        if end > tokens.len() {
            return Err(format!("run ending at {end} overruns {} tokens", tokens.len()));
        }
        let body = &tokens[r.pos as usize..end];
        match r.kind {
            RunKind::Text { doc_id, start } => {
                if body.iter().any(|&t| t == eos_id || t == pad_id) {
                    return Err(format!("reserved id inside text run at {}", r.pos));
                }
                if let Some(docs) = docs {
                    let doc = docs
                        .get(doc_id as usize)
                        .ok_or_else(|| format!("unknown doc {doc_id}"))?;
                    let src = doc
                        .tokens
                        .get(start as usize..start as usize + r.len as usize)
                        .ok_or_else(|| format!("span past end of doc {doc_id}"))?;
                    if src != body {
                        return Err(format!("text run at {} differs from doc {doc_id}", r.pos));
                    }
                }
            }
            RunKind::Eos | RunKind::ChunkEnd => {
                if r.len != 1 || body[0] != eos_id {
                    return Err(format!("bad end marker at {}", r.pos));
                }
            }
            RunKind::TailPad | RunKind::FillPad => {
                if body.iter().any(|&t| t != pad_id) {
                    return Err(format!("non-pad id in pad run at {}", r.pos));
                }
            }
        }
        cursor = r.end();
    }
    if cursor as usize != tokens.len() {
        return Err(format!("runs cover {cursor} of {} tokens", tokens.len()));
    }
    Ok(())
}
