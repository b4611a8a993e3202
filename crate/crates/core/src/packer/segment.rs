use super::layout::{push_run, slice_runs, Run, RunKind};
use super::{Atom, PackConfig};
use crate::corpus::Document;
use crate::TokenId;

/// Cuts one document into padding-strategy atoms.
pub fn segment_padding(doc: &Document, cfg: &PackConfig) -> Vec<Atom> {
    let body = cfg.atom_size - 1;
    let doc_id = doc.doc_id as u32;
    let mut atoms = Vec::with_capacity(doc.tokens.len() / body + 1);
    let mut chunks = doc.tokens.chunks_exact(body);
    for (i, chunk) in chunks.by_ref().enumerate() {
        let mut tokens = Vec::with_capacity(cfg.atom_size);
        tokens.extend_from_slice(chunk);
        tokens.push(cfg.eos_id);
        let mut runs = Vec::with_capacity(2);
        push_run(
            &mut runs,
            body,
            RunKind::Text {
                doc_id,
                start: (i * body) as u32,
            },
        );
        push_run(&mut runs, 1, RunKind::ChunkEnd);
        atoms.push(Atom { tokens, runs });
    }
    let tail = chunks.remainder();
    if !tail.is_empty() {
        let target = if cfg.atom_size <= cfg.msl {
            cfg.atom_size
        } else {
            tail.len().div_ceil(cfg.msl) * cfg.msl
        };
        let mut tokens = Vec::with_capacity(target);
        tokens.extend_from_slice(tail);
        tokens.resize(target, cfg.pad_id);
        let mut runs = Vec::with_capacity(2);
        push_run(
            &mut runs,
            tail.len(),
            RunKind::Text {
                doc_id,
                start: (doc.tokens.len() - tail.len()) as u32,
            },
        );
        push_run(&mut runs, target - tail.len(), RunKind::TailPad);
        atoms.push(Atom { tokens, runs });
    }
    atoms
}

/// The concatenated corpus with per-token provenance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenStream {
    pub tokens: Vec<TokenId>,
    pub runs: Vec<Run>,
}

/// `doc0 ++ [EOS] ++ doc1 ++ [EOS] ++ ...`
pub fn build_concat_stream(docs: &[Document], eos_id: TokenId) -> TokenStream {
    let total: usize = docs.iter().map(|d| d.tokens.len() + 1).sum();
    let mut tokens = Vec::with_capacity(total);
    let mut runs = Vec::with_capacity(docs.len() * 2);
    for doc in docs {
        tokens.extend_from_slice(&doc.tokens);
        tokens.push(eos_id);
        push_run(
            &mut runs,
            doc.tokens.len(),
            RunKind::Text {
                doc_id: doc.doc_id as u32,
                start: 0,
            },
        );
        push_run(&mut runs, 1, RunKind::Eos);
    }
    TokenStream { tokens, runs }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitOutcome {
    pub atoms: Vec<Atom>,
    /// Stream tokens discarded with the final partial chunk.
    pub dropped: usize,
}

/// Cuts the stream into `atom_size` atoms; the final partial chunk is dropped
/// or padded with `pad_id`.
pub fn split_stream(
    stream: &TokenStream,
    atom_size: usize,
    drop_remainder: bool,
    pad_id: TokenId,
) -> SplitOutcome {
    let full = stream.tokens.len() / atom_size;
    let rem = stream.tokens.len() % atom_size;
    let mut atoms: Vec<Atom> = (0..full)
        .map(|k| {
            let (lo, hi) = (k * atom_size, (k + 1) * atom_size);
            Atom {
                tokens: stream.tokens[lo..hi].to_vec(),
                runs: slice_runs(&stream.runs, lo as u32, hi as u32),
            }
        })
        .collect();
    let mut dropped = 0;
    if rem > 0 {
        if drop_remainder {
            dropped = rem;
        } else {
            let lo = full * atom_size;
            let mut tokens = stream.tokens[lo..].to_vec();
            let mut runs = slice_runs(&stream.runs, lo as u32, stream.tokens.len() as u32);
            tokens.resize(atom_size, pad_id);
            push_run(&mut runs, atom_size - rem, RunKind::FillPad);
            atoms.push(Atom { tokens, runs });
        }
    }
    SplitOutcome { atoms, dropped }
}
