//! Packing pipeline: documents to atoms, seeded shuffle, merge/split to MSL.
//!
//! Padding strategy: each document is cut into chunks of `atom_size - 1` tokens
//! plus an end marker; the remainder becomes a tail padded either to
//! `atom_size` (atom <= msl) or to the smallest multiple of `msl` covering it
//! (atom > msl). Concat strategy: documents are joined with EOS into one
//! stream which is cut into `atom_size` atoms. In both cases atoms are then
//! shuffled and reshaped into rows of exactly `msl` tokens.

mod config;
pub mod format;
pub mod layout;
mod reshape;
mod segment;
pub mod shuffle;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    table1_atom_sizes, table1_batch_size, table1_combinations, ConfigError, PackConfig, Strategy,
    DEFAULT_BATCH_SIZE, DEFAULT_SEED, GPT2_EOS_ID, TABLE1_GRID,
};
pub use layout::{Run, RunKind, Span};
pub use reshape::reshape_to_msl;
pub use segment::{build_concat_stream, segment_padding, split_stream, SplitOutcome, TokenStream};

use crate::accounting::{stats_for, PackStats};
use crate::corpus::Document;
use crate::TokenId;

#[derive(Debug, Error)]
pub enum PackError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("atom {index} has length {len}, expected {expected}")]
    InvalidAtom {
        index: usize,
        len: usize,
        expected: String,
    },
    #[error("document {doc_id} is empty")]
    EmptyDocument { doc_id: usize },
    #[error("document {doc_id} contains reserved id {token}")]
    ReservedToken { doc_id: usize, token: TokenId },
}

/// One shuffling unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub tokens: Vec<TokenId>,
    pub runs: Vec<Run>,
}

impl Atom {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn spans(&self) -> impl Iterator<Item = Span> + '_ {
        layout::spans(&self.runs)
    }

    pub fn doc_ids(&self) -> Vec<u32> {
        layout::doc_ids(&self.runs)
    }

    /// Length of the trailing pad run, if any.
    pub fn pad_count(&self) -> usize {
        self.runs
            .iter()
            .rev()
            .take_while(|r| r.kind.is_pad())
            .map(|r| r.len as usize)
            .sum()
    }
}

/// One output row of exactly `msl` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedSequence {
    pub tokens: Vec<TokenId>,
    pub loss_mask: Vec<bool>,
    /// Provenance tiling `tokens`; empty when the dataset was stored without it.
    pub runs: Vec<Run>,
}

impl PackedSequence {
    pub(crate) fn from_parts(tokens: Vec<TokenId>, runs: Vec<Run>) -> Self {
        let loss_mask = layout::loss_mask(&runs, tokens.len());
        Self {
            tokens,
            loss_mask,
            runs,
        }
    }

    pub fn spans(&self) -> impl Iterator<Item = Span> + '_ {
        layout::spans(&self.runs)
    }

    pub fn doc_ids(&self) -> Vec<u32> {
        layout::doc_ids(&self.runs)
    }

    pub fn has_provenance(&self) -> bool {
        !self.runs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedDataset {
    pub sequences: Vec<PackedSequence>,
    pub config: PackConfig,
    pub stats: PackStats,
    /// Hex SHA-256 of the token payload as stored on disk.
    pub manifest_checksum: String,
}

impl PackedDataset {
    pub fn msl(&self) -> usize {
        self.config.msl
    }

    /// Checks length, mask and provenance invariants of every row.
    pub fn validate(&self, docs: Option<&[Document]>) -> Result<(), String> {
        let msl = self.config.msl;
        for (i, seq) in self.sequences.iter().enumerate() {
            if seq.tokens.len() != msl || seq.loss_mask.len() != msl {
                return Err(format!("sequence {i} has length {}", seq.tokens.len()));
            }
            if seq.has_provenance() {
                layout::check_tiling(&seq.tokens, &seq.runs, self.config.eos_id, self.config.pad_id, docs)
                    .map_err(|e| format!("sequence {i}: {e}"))?;
                if layout::loss_mask(&seq.runs, msl) != seq.loss_mask {
                    return Err(format!("sequence {i}: loss mask disagrees with provenance"));
                }
            }
        }
        Ok(())
    }
}

/// Hex SHA-256 over the little-endian u32 token payload.
pub fn payload_sha256(sequences: &[PackedSequence]) -> String {
    let mut hasher = Sha256::new();
    for seq in sequences {
        for t in &seq.tokens {
            hasher.update(t.to_le_bytes());
        }
    }
    format!("{:x}", hasher.finalize())
}

/// Permutes atoms with the pinned generator.
pub fn shuffle_atoms(mut atoms: Vec<Atom>, seed: u64) -> Vec<Atom> {
    shuffle::shuffle_in_place(&mut atoms, seed);
    atoms
}

fn check_docs(docs: &[Document], cfg: &PackConfig) -> Result<(), PackError> {
    docs.par_iter().try_for_each(|doc| {
        if doc.tokens.is_empty() {
            return Err(PackError::EmptyDocument { doc_id: doc.doc_id });
        }
        match doc
            .tokens
            .iter()
            .find(|&&t| t == cfg.eos_id || t == cfg.pad_id)
        {
            Some(&token) => Err(PackError::ReservedToken {
                doc_id: doc.doc_id,
                token,
            }),
            None => Ok(()),
        }
    })
}

/// Builds the atoms for `docs` in canonical (pre-shuffle) order.
pub fn make_atoms(docs: &[Document], cfg: &PackConfig) -> Result<Vec<Atom>, PackError> {
    cfg.validate()?;
    check_docs(docs, cfg)?;
    Ok(match cfg.strategy {
        Strategy::Padding => docs
            .par_iter()
            .map(|doc| segment_padding(doc, cfg))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect(),
        Strategy::Concat => {
            let stream = build_concat_stream(docs, cfg.eos_id);
            split_stream(&stream, cfg.atom_size, cfg.drop_concat_remainder, cfg.pad_id).atoms
        }
    })
}

/// Runs the full pipeline. Output depends only on `(docs, cfg)`.
pub fn pack(docs: &[Document], cfg: &PackConfig) -> Result<PackedDataset, PackError> {
    let atoms = make_atoms(docs, cfg)?;
    let atoms = shuffle_atoms(atoms, cfg.seed);
    let sequences = reshape_to_msl(atoms, cfg)?;
    let stats = stats_for(&sequences, cfg).expect("freshly packed rows carry provenance");
    let manifest_checksum = payload_sha256(&sequences);
    Ok(PackedDataset {
        sequences,
        config: *cfg,
        stats,
        manifest_checksum,
    })
}
